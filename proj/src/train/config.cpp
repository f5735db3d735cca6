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

#include "udgs/train/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "udgs/core/error.hpp"

namespace udgs::train {

const std::vector<Config::Key>& Config::registry() {
  static const std::vector<Key> keys = {
      {"seed", "7", "run seed; every random stream derives from it"},
      {"dataset", "data", "dataset directory"},
      {"out", "run", "output directory"},
      {"checkpoint", "", "checkpoint file (default <out>/model.ckpt)"},
      {"wav", "", "optional PCM16 WAV driving the scene"},
      {"simd", "auto", "kernel backend: auto, scalar or avx2"},
      // scene and dataset
      {"primitives", "200", "total primitives"},
      {"mouth_primitives", "40", "primitives tagged mouth"},
      {"width", "64", "image width"},
      {"height", "64", "image height"},
      {"focal", "85", "focal length in pixels"},
      {"color_channels", "3", "color channels Z"},
      {"frames", "120", "frames in the dataset"},
      {"period", "30", "drive period in frames"},
      {"fps", "25", "video frame rate"},
      {"holdout_every", "6", "frame i is held out when i % holdout_every == holdout_every - 1"},
      {"mouth_amplitude", "0.25", "mouth translation at drive 1 (scene units)"},
      {"face_angle", "0.7", "face nod angle range in radians"},
      {"sample_rate", "16000", "synthetic audio sample rate"},
      // conditioning
      {"f_audio_source", "audio", "audio (projected MFCC window) or walk (random walk)"},
      {"dim_audio", "32", "f_audio width"},
      {"dim_exp", "64", "f_exp width"},
      {"dim_tone", "32", "f_tone width"},
      {"dim_emo_attn", "16", "f_emo_attn width"},
      {"d_code", "16", "plane code width"},
      {"base_resolution", "64", "plane grid resolution at scale 1"},
      {"frame_ms", "25", "analysis frame length"},
      {"hop_ms", "10", "analysis hop"},
      {"n_mels", "26", "mel filters"},
      {"n_mfcc", "13", "cepstral coefficients"},
      {"audio_window", "8", "MFCC rows per video frame"},
      {"emotion_classes", "4", "emotion categories used in pretraining"},
      // model
      {"d_state", "32", "state vector width"},
      {"members", "10", "ensemble members per uncertainty block"},
      {"hidden", "64", "hidden width of members and decoder"},
      {"position_gain", "0.05", "decoder position output gain"},
      {"rotation_gain", "0.05", "decoder rotation output gain"},
      {"scale_gain", "0.05", "decoder log-scale output gain"},
      {"fusion_mode", "uncertainty", "uncertainty or uniform"},
      // training
      {"iterations_pretrain", "300", "audio/emotion encoder pretraining steps"},
      {"iterations_branch", "2000", "per-branch training steps"},
      {"iterations_joint", "500", "joint fine-tuning steps"},
      {"lambda", "0.5", "D-SSIM weight"},
      {"gamma", "0.2", "perceptual weight"},
      {"lr", "0.001", "learning rate of networks"},
      {"lr_static", "0.001", "learning rate of static primitive parameters"},
      {"lr_planes", "0.01", "learning rate of plane codes"},
      {"lr_pretrain", "0.003", "learning rate of encoder pretraining"},
      {"nll_weight", "0", "weight of the optional NLL regularizer"},
      {"corrupt_view", "none", "view receiving additive noise: none, f_audio, f_exp, f_tone"},
      {"corrupt_sigma", "0", "standard deviation of the corruption noise"},
      {"ablation_seeds", "7,8,9", "seeds for ablate-fusion"},
  };
  return keys;
}

Config::Config() {
  for (const Key& k : registry()) values_.emplace(k.name, k.default_value);
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::set(std::string_view key, std::string_view value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + std::string(key) + "'");
  it->second = std::string(value);
}

bool Config::contains(std::string_view key) const { return values_.find(key) != values_.end(); }

const std::string& Config::text(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

double Config::number(std::string_view key) const {
  const std::string& v = text(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw ValidationError("config key '" + std::string(key) + "' is not a number: '" + v + "'");
  return out;
}

long Config::integer(std::string_view key) const {
  const std::string& v = text(key);
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ValidationError("config key '" + std::string(key) + "' is not an integer: '" + v + "'");
  return out;
}

std::size_t Config::count(std::string_view key) const {
  const long v = integer(key);
  require(v >= 0, "config key '" + std::string(key) + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

std::vector<long> Config::integer_list(std::string_view key) const {
  std::vector<long> out;
  std::stringstream ss(text(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      throw ValidationError("config key '" + std::string(key) + "' is not an integer list");
    out.push_back(v);
  }
  require(!out.empty(), "config key '" + std::string(key) + "' is empty");
  return out;
}

std::string Config::resolved() const {
  std::string out;
  for (const Key& k : registry()) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

void Config::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << resolved();
}

}  // namespace udgs::train
