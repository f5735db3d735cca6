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
#include <optional>
#include <span>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/cond/attention.hpp"
#include "udgs/cond/audio.hpp"
#include "udgs/cond/features.hpp"
#include "udgs/cond/triplane.hpp"
#include "udgs/deform/decoder.hpp"
#include "udgs/fusion/uncertainty.hpp"
#include "udgs/splat/rasterizer.hpp"
#include "udgs/train/config.hpp"
#include "udgs/train/harness.hpp"

namespace udgs::train {

/// Canonical primitive state fed to every non-emotion block: the center
/// normalized to the scene box (3) and the canonical quaternion (4).
inline constexpr std::size_t kPrimitiveStateDim = 7;

struct ModelConfig {
  cond::ViewDims dims;
  std::size_t d_state = 32;
  std::size_t members = 10;
  std::size_t hidden = 64;
  std::size_t d_code = 16;
  std::size_t base_resolution = 64;
  deform::DecoderConfig decoder;
  fusion::FusionMode mode = fusion::FusionMode::kUncertainty;
  cond::FrameConfig frame;
  std::size_t audio_window = 8;
  int emotion_classes = 4;
  bool audio_features = true;  // false: f_audio is the random walk

  static ModelConfig from(const Config& config);
};

/// Conditioning of one frame; each tensor is a single row.
struct FrameConditioning {
  ad::Tensor f_audio;
  ad::Tensor f_exp;
  ad::Tensor f_tone;
  ad::Tensor f_emo_attn;
};

/// Additive N(0, sigma^2) noise on one view, drawn per frame and entry.
struct Corruption {
  std::optional<fusion::View> view;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Audio projection and attention emotion encoder. They are pretrained on
/// their own losses and then frozen; the per-frame outputs become inputs of
/// the branch models.
class Conditioner {
 public:
  /// Encoder input widths follow from the audio sample rate.
  Conditioner(const ModelConfig& config, int sample_rate, std::uint64_t seed);

  /// Audio rows per video frame, built once from the dataset's clip.
  struct AudioStreams {
    std::vector<ad::Tensor> mfcc_window;  // [1 x window * n_mfcc]
    std::vector<ad::Tensor> spectrogram;  // [window x bins], normalized
    std::vector<ad::Tensor> mfcc;         // [window x n_mfcc], normalized
    std::vector<ad::Tensor> raw;          // [window x frame_len]
  };
  AudioStreams streams(const Dataset& dataset) const;

  /// Returns the per-iteration loss (recon + emotion terms).
  std::vector<double> pretrain(const Dataset& dataset, const AudioStreams& audio,
                               std::size_t iterations, double lr, std::uint64_t seed);

  std::vector<FrameConditioning> condition(const Dataset& dataset, const AudioStreams& audio,
                                           const Corruption& corruption);

  std::vector<ad::Parameter*> parameters();
  cond::EmotionEncoder& emotion() { return emotion_; }

 private:
  ModelConfig config_;
  int sample_rate_;
  cond::AudioEncoder audio_;
  cond::EmotionEncoder emotion_;
  cond::EmotionHeads heads_;
};

/// One branch: static primitive parameters, its uncertainty stack, its
/// decoder, and (face only) the tri-plane emotion field.
class BranchModel {
 public:
  BranchModel(splat::Branch branch, const splat::Scene& canonical, const ModelConfig& config,
              std::uint64_t seed);

  splat::Branch branch() const { return branch_; }
  const std::vector<std::size_t>& scene_indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  fusion::FusionStack& stack() { return stack_; }
  deform::DeformDecoder& decoder() { return decoder_; }
  cond::EmotionField* emotion_field() { return field_ ? &*field_ : nullptr; }
  fusion::FusionMode mode() const { return config_.mode; }
  void set_mode(fusion::FusionMode mode) { config_.mode = mode; }

  struct Vars {
    ad::Var center, rotation, scale, opacity, color;
    fusion::FusionStack::Result fusion;
    deform::DeformDecoder::Vars delta;
    std::size_t rotation_fallbacks = 0;
  };
  Vars forward(ad::Graph& graph, const FrameConditioning& frame);

  /// Deformed primitives in branch order.
  std::vector<splat::GaussianPrimitive> primitives(const ad::Graph& graph, const Vars& vars) const;

  /// Seeds routing per-primitive render gradients (branch order) into the graph.
  /// `storage` keeps the seed buffers alive.
  void seeds(const Vars& vars, std::span<const splat::PrimitiveGrad> grads,
             std::vector<std::vector<double>>& storage, std::vector<ad::Seed>& out) const;

  std::vector<ad::Parameter*> static_parameters();
  std::vector<ad::Parameter*> network_parameters();
  std::vector<ad::Parameter*> plane_parameters();
  std::vector<ad::Parameter*> parameters();

 private:
  splat::Branch branch_;
  ModelConfig config_;
  std::vector<std::size_t> indices_;
  ad::Tensor state_;  // [P x 7]
  ad::Parameter center_, rotation_, log_scale_, opacity_logit_, color_logit_;
  fusion::FusionStack stack_;
  deform::DeformDecoder decoder_;
  std::optional<cond::EmotionField> field_;
  cond::TriplaneTaps taps_;
};

/// Both branches plus the conditioner.
struct Model {
  Model(const splat::Scene& canonical, const ModelConfig& config, int sample_rate,
        std::uint64_t seed);

  ModelConfig config;
  Conditioner conditioner;
  BranchModel face;
  BranchModel mouth;

  BranchModel& branch(splat::Branch b) { return b == splat::Branch::kFace ? face : mouth; }
  std::vector<ad::Parameter*> parameters();
};

/// Joint render of both branches in scene order.
struct JointVars {
  BranchModel::Vars face;
  BranchModel::Vars mouth;
};
JointVars forward_joint(ad::Graph& graph, Model& model, const FrameConditioning& frame);
std::vector<splat::GaussianPrimitive> joint_primitives(const ad::Graph& graph, Model& model,
                                                       const JointVars& vars);

/// Binary checkpoint of every parameter (name, shape, doubles).
void save_checkpoint(const std::filesystem::path& path, std::span<ad::Parameter* const> params);
/// Every parameter must be present with a matching shape.
void load_checkpoint(const std::filesystem::path& path, std::span<ad::Parameter* const> params);

/// FNV-1a over the raw bytes of the parameter values (order-sensitive).
std::uint64_t parameter_hash(std::span<ad::Parameter* const> params);

}  // namespace udgs::train
