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

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/ad/mlp.hpp"
#include "udgs/splat/gaussian.hpp"

namespace udgs::deform {

/// Per-primitive offsets: position, additive quaternion offset, log-scale offset.
struct DeformationDelta {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
};

struct DecoderConfig {
  std::size_t state_dim = 32;
  std::size_t hidden = 64;
  // Head outputs are multiplied by these before use, so the initial network
  // produces small deformations.
  double position_gain = 0.05;
  double rotation_gain = 0.05;
  double scale_gain = 0.05;
  // Heads start at zero so an untrained decoder leaves the canonical scene
  // in place; the trunk keeps its random init.
  bool zero_heads = true;
};

/// Shared relu trunk (state -> hidden -> hidden) and position / rotation /
/// scale heads. In mouth mode only the position head exists.
class DeformDecoder {
 public:
  DeformDecoder() = default;
  DeformDecoder(splat::Branch mode, const DecoderConfig& config, Rng& rng,
                const std::string& name);

  splat::Branch mode() const { return mode_; }
  const DecoderConfig& config() const { return config_; }
  ad::MlpBlock& trunk() { return trunk_; }
  ad::MlpBlock& position_head() { return position_; }
  /// Throws ValidationError in mouth mode.
  ad::MlpBlock& rotation_head();
  ad::MlpBlock& scale_head();
  std::vector<ad::Parameter*> parameters();
  /// Parameters of the output heads only.
  std::vector<ad::Parameter*> heads();

  struct Vars {
    ad::Var position;                  // [P x 3]
    std::optional<ad::Var> rotation;   // [P x 4], face mode only
    std::optional<ad::Var> log_scale;  // [P x 3], face mode only
  };
  /// state: [P x state_dim]
  Vars forward(ad::Graph& graph, ad::Var state);

  /// One state vector -> delta. Mouth mode leaves rotation and log_scale zero.
  DeformationDelta decode(std::span<const double> state);

 private:
  splat::Branch mode_ = splat::Branch::kFace;
  DecoderConfig config_;
  ad::MlpBlock trunk_;
  ad::MlpBlock position_;
  ad::MlpBlock rotation_;
  ad::MlpBlock scale_;
};

inline constexpr double kMinQuaternionNorm = 1e-8;

struct AppliedDelta {
  splat::GaussianPrimitive primitive;
  bool rotation_fallback = false;  // |r + dr| < 1e-8: identity rotation used
};

/// center + d_pos; normalize(rotation + d_rot); scale * exp(d_log_scale);
/// opacity and color are copied.
AppliedDelta apply_delta(const splat::GaussianPrimitive& primitive, const DeformationDelta& delta);

/// Graph form over P primitives. Rotation rows whose sum has norm below
/// kMinQuaternionNorm are replaced by the identity; their count is reported.
struct DeformedVars {
  ad::Var center;    // [P x 3]
  ad::Var rotation;  // [P x 4], unit rows
  ad::Var scale;     // [P x 3]
  std::size_t rotation_fallbacks = 0;
};
DeformedVars apply_delta(ad::Graph& graph, ad::Var center, ad::Var rotation, ad::Var log_scale,
                         const DeformDecoder::Vars& delta);

/// Row-wise q / |q| on the graph.
ad::Var normalize_rows(ad::Graph& graph, ad::Var q);

}  // namespace udgs::deform
