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

#include <filesystem>
#include <string>
#include <vector>

#include "udgs/ad/tensor.hpp"
#include "udgs/cond/audio.hpp"
#include "udgs/cond/features.hpp"
#include "udgs/splat/camera.hpp"
#include "udgs/splat/gaussian.hpp"
#include "udgs/splat/image.hpp"
#include "udgs/train/config.hpp"

namespace udgs::train {

struct HarnessConfig {
  std::uint64_t seed = 7;
  std::size_t primitives = 200;
  std::size_t mouth_primitives = 40;
  int width = 64;
  int height = 64;
  double focal = 85.0;
  int color_channels = 3;
  std::size_t frames = 120;
  std::size_t period = 30;
  double fps = 25.0;
  std::size_t holdout_every = 6;
  double mouth_amplitude = 0.25;
  double face_angle = 0.7;
  int sample_rate = 16000;
  std::string wav;
  cond::ViewDims dims;

  static HarnessConfig from(const Config& config);
  void validate() const;
};

/// 0.5 + 0.5 sin(2 pi frame / period).
double drive_at(std::size_t frame, std::size_t period);
bool is_held_out(std::size_t frame, std::size_t holdout_every);

struct SceneSetup {
  splat::Scene scene;
  splat::Camera camera;
  std::vector<double> background;
};

/// Face primitives tile the front half of an ellipsoid shell (minus a mouth
/// opening); mouth primitives fill a band behind the opening.
SceneSetup make_scene(const HarnessConfig& config);

/// Ground-truth motion: mouth primitives move down by amplitude * drive, face
/// primitives nod about the x axis by face_angle * (drive - 0.5).
splat::Scene scripted_deformation(const splat::Scene& canonical, double drive,
                                  const HarnessConfig& config);

struct FrameRecord {
  std::size_t index = 0;
  double drive = 0.0;
  bool held_out = false;
};

/// Everything a run needs, as stored on disk by write_dataset().
struct Dataset {
  SceneSetup setup;
  std::vector<FrameRecord> frames;
  std::vector<splat::Image> gt;
  std::vector<splat::Image> mask_face;
  std::vector<splat::Image> mask_mouth;
  cond::AudioClip audio;
  double fps = 25.0;
  ad::Tensor f_exp;           // [frames x dim_exp]
  ad::Tensor f_tone;          // [frames x dim_tone]
  ad::Tensor f_audio_walk;    // [frames x dim_audio]
  ad::Tensor audio_target;    // [frames x dim_audio]
  ad::Tensor emotion_target;  // [frames x dim_emo_attn]

  std::vector<std::size_t> split(bool held_out) const;
};

/// Generates the canonical scene, drive, audio, features and rendered frames.
Dataset synth_dataset(const HarnessConfig& config);

// Layout:
//   scene.txt camera.txt background.txt frames.txt audio.wav
//   features/{f_exp,f_tone,f_audio_walk,audio_target,emotion_target}.txt
//   gt/NNNN.ppm mask_face/NNNN.ppm mask_mouth/NNNN.ppm
// Images are stored 8-bit; the in-memory dataset is quantized the same way.
void write_dataset(const std::filesystem::path& root, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& root);

}  // namespace udgs::train
