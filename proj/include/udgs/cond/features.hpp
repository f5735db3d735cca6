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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "udgs/ad/tensor.hpp"

namespace udgs::cond {

struct ViewDims {
  std::size_t audio = 32;
  std::size_t exp = 64;
  std::size_t tone = 32;
  std::size_t emo_attn = 16;
};

/// Stand-ins for pretrained feature extractors. Everything is a pure function
/// of (seed, frame, drive):
///   f_exp   = B_exp * phi(drive)
///   f_tone  = one random vector per identity
///   f_audio = AR(1) random walk over frames (used when no audio is supplied)
/// with phi(d) = [d, d^2, sin(pi d), cos(pi d), sin(2 pi d), cos(2 pi d)].
class SyntheticFeatures {
 public:
  static constexpr std::size_t kBasisTerms = 6;

  SyntheticFeatures(std::uint64_t seed, ViewDims dims);

  static std::array<double, kBasisTerms> drive_basis(double drive);

  struct Frame {
    std::vector<double> f_exp;
    std::vector<double> f_tone;
    std::vector<double> f_audio;
  };
  Frame frame(std::size_t index, double drive) const;

  std::vector<double> expression(double drive) const;
  const std::vector<double>& tone() const { return tone_; }
  std::vector<double> audio_walk(std::size_t index) const;

  /// Regression target for the audio projection (a different basis than f_exp).
  std::vector<double> audio_target(double drive) const;
  /// f_gt_emo, the expression-feature target of emotion pretraining.
  std::vector<double> emotion_target(double drive) const;
  /// Drive quantized into `classes` equal bins.
  static int emotion_label(double drive, int classes);

  const ViewDims& dims() const { return dims_; }

 private:
  std::uint64_t seed_;
  ViewDims dims_;
  ad::Tensor exp_basis_;    // [exp x 6]
  ad::Tensor audio_basis_;  // [audio x 6]
  ad::Tensor emo_basis_;    // [emo_attn x 6]
  std::vector<double> tone_;
};

// Feature table text format:
//
//   # udgs features v1 <name> <frames> <dim>
//   <frame> v_0 ... v_{dim-1}
//
// Frame indices must run 0, 1, 2, ... in order.
void write_feature_table(const std::filesystem::path& path, const std::string& name,
                         const ad::Tensor& table);
ad::Tensor read_feature_table(const std::filesystem::path& path, std::string* name = nullptr);

}  // namespace udgs::cond
