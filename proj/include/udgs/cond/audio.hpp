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

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "udgs/ad/tensor.hpp"

namespace udgs::cond {

struct AudioClip {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 16000;

  void validate() const;
};

/// RIFF/WAVE, PCM 16-bit, mono or stereo (stereo is averaged). Samples are
/// scaled by 1/32768. Throws ValidationError on malformed or unsupported input.
AudioClip load_wav(const std::filesystem::path& path);
/// Nearest PCM 16-bit code of s in [-1, 1] (clamped).
std::int16_t pcm16_code(double s);
/// Rounds every sample to the PCM 16-bit grid, so write_wav then load_wav is exact.
AudioClip quantize_pcm16(AudioClip clip);
/// Mono PCM 16-bit; samples are clamped to [-1, 32767/32768].
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

struct FrameConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 26;
  int n_mfcc = 13;
  double log_floor = 1e-10;
};

/// floor((n - frame_len) / hop) + 1, or 0 when n < frame_len.
std::size_t frame_count(std::size_t n_samples, std::size_t frame_len, std::size_t hop);

/// Per-frame streams over one clip. All three share the row count.
struct FrameFeatures {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t fft_len = 0;
  ad::Tensor spectrogram;  // [frames x (fft_len/2 + 1)], log power
  ad::Tensor mfcc;         // [frames x n_mfcc]
  ad::Tensor raw;          // [frames x frame_len], un-windowed samples

  std::size_t frames() const { return mfcc.rows(); }
};

/// STFT (Hann window) -> log power spectrogram, log mel filterbank (0 Hz to
/// Nyquist, HTK mel scale), orthonormal DCT-II -> MFCC. The FFT plan and the
/// filterbank are built once per (sample rate, config).
class SpectralAnalyzer {
 public:
  SpectralAnalyzer(int sample_rate, FrameConfig config);
  ~SpectralAnalyzer();
  SpectralAnalyzer(const SpectralAnalyzer&) = delete;
  SpectralAnalyzer& operator=(const SpectralAnalyzer&) = delete;

  /// Throws ValidationError when the clip is shorter than one frame.
  FrameFeatures extract(const AudioClip& clip) const;

  std::size_t frame_len() const { return frame_len_; }
  std::size_t hop() const { return hop_; }
  std::size_t fft_len() const { return fft_len_; }
  const ad::Tensor& mel_filters() const { return mel_; }

 private:
  struct Fft;
  int sample_rate_;
  FrameConfig config_;
  std::size_t frame_len_, hop_, fft_len_;
  std::vector<double> window_;
  ad::Tensor mel_;  // [n_mels x bins]
  ad::Tensor dct_;  // [n_mfcc x n_mels]
  std::unique_ptr<Fft> fft_;
};

FrameFeatures extract_frames(const AudioClip& clip, const FrameConfig& config);

/// Per-column mean/variance normalization (CMVN) of a [frames x dim] table.
ad::Tensor normalize_columns(const ad::Tensor& table);

/// Harmonic voice-like signal whose loudness and pitch follow a per-video-frame
/// drive in [0, 1]. Length covers `drives.size()` video frames plus one
/// analysis frame of padding.
AudioClip synth_audio(const std::vector<double>& drives, double fps, int sample_rate,
                      std::uint64_t seed);

/// Per-video-frame RMS envelope of `clip`, rescaled to [0, 1].
std::vector<double> envelope_drive(const AudioClip& clip, double fps, std::size_t n_frames);

/// First audio frame of the `window` frames centered on video frame `video_frame`.
std::size_t window_start(std::size_t video_frame, double fps, const FrameFeatures& frames,
                         int sample_rate, std::size_t window);

}  // namespace udgs::cond
