// Copyright 2026 The udgs Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "udgs/cond/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"

namespace udgs::cond {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

void AudioClip::validate() const {
  require(sample_rate == 16000 || sample_rate == 22050 || sample_rate == 44100,
          "unsupported sample rate " + std::to_string(sample_rate) +
              " (expected 16000, 22050 or 44100)");
  require(!samples.empty(), "audio clip is empty");
}

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  const std::string where = path.string() + ": ";
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          where + "not a RIFF/WAVE file");
  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    require(body + len <= bytes.size() || std::memcmp(chunk, "data", 4) == 0,
            where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      require(len >= 16, where + "malformed fmt chunk");
      std::uint16_t format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = static_cast<int>(read_u32(bytes.data() + body + 4));
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE && len >= 26) format = read_u16(bytes.data() + body + 24);
      require(format == 1, where + "unsupported codec (only PCM is accepted)");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = std::min<std::size_t>(len, bytes.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  require(have_fmt, where + "missing fmt chunk");
  require(data != nullptr, where + "missing data chunk");
  require(bits == 16, where + "only 16-bit PCM is supported");
  require(channels == 1 || channels == 2, where + "only mono or stereo is supported");
  const std::size_t frames = data_len / (2u * channels);
  require(frames > 0, where + "empty payload");
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto s = static_cast<std::int16_t>(read_u16(data + 2 * (i * channels + c)));
      acc += s / 32768.0;
    }
    clip.samples[i] = acc / channels;
  }
  clip.validate();
  return clip;
}

std::int16_t pcm16_code(double s) {
  const long v = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768L, 32767L));
}

AudioClip quantize_pcm16(AudioClip clip) {
  for (double& s : clip.samples) s = pcm16_code(s) / 32768.0;
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples) put_u16(out, static_cast<std::uint16_t>(pcm16_code(s)));
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t hop) {
  if (frame_len == 0 || hop == 0 || n_samples < frame_len) return 0;
  return (n_samples - frame_len) / hop + 1;
}

struct SpectralAnalyzer::Fft {
  explicit Fft(std::size_t n)
      : in(fftw_alloc_real(n)), out(fftw_alloc_complex(n / 2 + 1)) {
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  double* in;
  fftw_complex* out;
  fftw_plan plan;
};

SpectralAnalyzer::SpectralAnalyzer(int sample_rate, FrameConfig config)
    : sample_rate_(sample_rate), config_(config) {
  require(config.frame_ms > 0 && config.hop_ms > 0, "frame and hop durations must be positive");
  require(config.n_mels > 0 && config.n_mfcc > 0 && config.n_mfcc <= config.n_mels,
          "need 0 < n_mfcc <= n_mels");
  frame_len_ = static_cast<std::size_t>(std::lround(sample_rate * config.frame_ms / 1000.0));
  hop_ = static_cast<std::size_t>(std::lround(sample_rate * config.hop_ms / 1000.0));
  fft_len_ = 1;
  while (fft_len_ < frame_len_) fft_len_ <<= 1;
  window_.resize(frame_len_);
  for (std::size_t i = 0; i < frame_len_; ++i)
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (frame_len_ - 1));

  const std::size_t bins = fft_len_ / 2 + 1;
  mel_ = ad::Tensor::matrix(config.n_mels, bins);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * i / (config.n_mels + 1));
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_len_;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      mel_.at(m, k) = w;
    }
  }
  dct_ = ad::Tensor::matrix(config.n_mfcc, config.n_mels);
  const double n = config.n_mels;
  for (int k = 0; k < config.n_mfcc; ++k) {
    const double norm = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int j = 0; j < config.n_mels; ++j)
      dct_.at(k, j) = norm * std::cos(std::numbers::pi * k * (j + 0.5) / n);
  }
  fft_ = std::make_unique<Fft>(fft_len_);
}

SpectralAnalyzer::~SpectralAnalyzer() = default;

FrameFeatures SpectralAnalyzer::extract(const AudioClip& clip) const {
  const std::size_t n_frames = frame_count(clip.samples.size(), frame_len_, hop_);
  require(n_frames > 0, "audio clip shorter than one analysis frame (" +
                            std::to_string(frame_len_) + " samples)");
  const std::size_t bins = fft_len_ / 2 + 1;
  FrameFeatures out;
  out.frame_len = frame_len_;
  out.hop = hop_;
  out.fft_len = fft_len_;
  out.spectrogram = ad::Tensor::matrix(n_frames, bins);
  out.mfcc = ad::Tensor::matrix(n_frames, config_.n_mfcc);
  out.raw = ad::Tensor::matrix(n_frames, frame_len_);
  std::vector<double> power(bins), logmel(config_.n_mels);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const double* src = clip.samples.data() + f * hop_;
    std::copy_n(src, frame_len_, &out.raw.data()[f * frame_len_]);
    for (std::size_t i = 0; i < fft_len_; ++i) fft_->in[i] = i < frame_len_ ? src[i] * window_[i] : 0.0;
    fftw_execute(fft_->plan);
    for (std::size_t k = 0; k < bins; ++k) {
      power[k] = fft_->out[k][0] * fft_->out[k][0] + fft_->out[k][1] * fft_->out[k][1];
      out.spectrogram.at(f, k) = std::log(std::max(power[k], config_.log_floor));
    }
    for (int m = 0; m < config_.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += mel_.at(m, k) * power[k];
      logmel[m] = std::log(std::max(e, config_.log_floor));
    }
    for (int k = 0; k < config_.n_mfcc; ++k) {
      double s = 0.0;
      for (int j = 0; j < config_.n_mels; ++j) s += dct_.at(k, j) * logmel[j];
      out.mfcc.at(f, k) = s;
    }
  }
  return out;
}

FrameFeatures extract_frames(const AudioClip& clip, const FrameConfig& config) {
  clip.validate();
  return SpectralAnalyzer(clip.sample_rate, config).extract(clip);
}

ad::Tensor normalize_columns(const ad::Tensor& table) {
  ad::Tensor out = table;
  const std::size_t rows = table.rows(), cols = table.cols();
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += table.at(r, c);
    mean /= rows;
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) var += (table.at(r, c) - mean) * (table.at(r, c) - mean);
    var /= rows;
    const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 0.0;
    for (std::size_t r = 0; r < rows; ++r) out.at(r, c) = (table.at(r, c) - mean) * inv;
  }
  return out;
}

AudioClip synth_audio(const std::vector<double>& drives, double fps, int sample_rate,
                      std::uint64_t seed) {
  require(!drives.empty() && fps > 0.0, "synth_audio needs frames and a positive fps");
  Rng rng(seed, "cond.synth_audio");
  AudioClip clip;
  clip.sample_rate = sample_rate;
  const double samples_per_frame = sample_rate / fps;
  const std::size_t n = static_cast<std::size_t>(std::ceil(drives.size() * samples_per_frame)) +
                        static_cast<std::size_t>(sample_rate / 20);
  clip.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Linear interpolation of the drive between video frame centers.
    const double t = i / samples_per_frame;
    const std::size_t k = std::min(static_cast<std::size_t>(t), drives.size() - 1);
    const std::size_t k1 = std::min(k + 1, drives.size() - 1);
    const double frac = std::clamp(t - k, 0.0, 1.0);
    const double d = drives[k] * (1.0 - frac) + drives[k1] * frac;
    const double f0 = 110.0 + 90.0 * d;
    phase += 2.0 * std::numbers::pi * f0 / sample_rate;
    double v = 0.0;
    for (int h = 1; h <= 4; ++h) v += std::sin(h * phase) / h;
    clip.samples[i] = 0.45 * (0.1 + 0.9 * d) * v / 2.1 + 0.002 * rng.normal();
  }
  return clip;
}

std::vector<double> envelope_drive(const AudioClip& clip, double fps, std::size_t n_frames) {
  require(fps > 0.0 && n_frames > 0, "envelope_drive needs frames and a positive fps");
  const double spf = clip.sample_rate / fps;
  std::vector<double> rms(n_frames, 0.0);
  for (std::size_t k = 0; k < n_frames; ++k) {
    const auto begin = static_cast<std::size_t>(k * spf);
    const auto end = std::min(clip.samples.size(), static_cast<std::size_t>((k + 1) * spf));
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) acc += clip.samples[i] * clip.samples[i];
    rms[k] = end > begin ? std::sqrt(acc / (end - begin)) : 0.0;
  }
  const auto [lo_it, hi_it] = std::minmax_element(rms.begin(), rms.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  for (double& r : rms) r = span > 0.0 ? (r - lo) / span : 0.5;
  return rms;
}

std::size_t window_start(std::size_t video_frame, double fps, const FrameFeatures& frames,
                         int sample_rate, std::size_t window) {
  require(frames.frames() >= window, "audio too short for the feature window");
  const double center_sample = video_frame * sample_rate / fps;
  const double center_frame = center_sample / static_cast<double>(frames.hop);
  const long start = std::lround(center_frame) - static_cast<long>(window / 2);
  return static_cast<std::size_t>(
      std::clamp<long>(start, 0, static_cast<long>(frames.frames() - window)));
}

}  // namespace udgs::cond
