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
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/core/rng.hpp"

namespace udgs::cond {

inline constexpr std::array<int, 3> kPlaneScales{1, 2, 4};

/// Plane p pairs coordinates (kPlaneAxes[p][0], kPlaneAxes[p][1]): XY, XZ, YZ.
inline constexpr std::array<std::array<int, 2>, 3> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}}};

/// Bilinear taps for P positions on one plane: 4 (row, weight) pairs each.
/// Node (i, j) of a res x res grid is row j * res + i, where i runs along the
/// plane's first axis.
struct PlaneTaps {
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
};

/// Taps for every (scale, plane) pair.
using TriplaneTaps = std::array<std::array<PlaneTaps, 3>, 3>;

/// Learnable code grids: for each scale s, three planes of (base * s)^2 codes.
class FeaturePlanes {
 public:
  FeaturePlanes() = default;
  /// Codes start at 1 + U(-init_jitter, init_jitter) so the three-way product
  /// neither vanishes nor explodes at initialization.
  FeaturePlanes(std::size_t base_resolution, std::size_t code_dim, Rng& rng,
                double init_jitter = 0.1);

  std::size_t base_resolution() const { return base_; }
  std::size_t code_dim() const { return code_dim_; }
  std::size_t resolution(std::size_t scale_index) const {
    return base_ * static_cast<std::size_t>(kPlaneScales[scale_index]);
  }
  ad::Parameter& plane(std::size_t scale_index, std::size_t plane_index) {
    return planes_[scale_index * 3 + plane_index];
  }
  const ad::Parameter& plane(std::size_t scale_index, std::size_t plane_index) const {
    return planes_[scale_index * 3 + plane_index];
  }
  std::vector<ad::Parameter*> parameters();

  /// Positions are clamped to the unit cube.
  PlaneTaps taps(std::size_t scale_index, std::size_t plane_index,
                 std::span<const Eigen::Vector3d> positions) const;
  TriplaneTaps taps(std::span<const Eigen::Vector3d> positions) const;

 private:
  std::size_t base_ = 0;
  std::size_t code_dim_ = 0;
  std::vector<ad::Parameter> planes_;  // scale-major, 9 planes
};

/// Per-scale linear maps f_emo_attn -> D_code, plus the planes themselves.
class EmotionField {
 public:
  EmotionField() = default;
  EmotionField(std::size_t base_resolution, std::size_t code_dim, std::size_t attn_dim, Rng& rng);

  FeaturePlanes& planes() { return planes_; }
  const FeaturePlanes& planes() const { return planes_; }
  ad::Parameter& scale_projection(std::size_t scale_index) { return proj_[scale_index]; }
  std::size_t out_dim() const { return 3 * planes_.code_dim(); }
  std::vector<ad::Parameter*> parameters();

  /// f_emo_attn: [1 x attn_dim] -> f_emotion [P x 3 * code_dim].
  ad::Var encode(ad::Graph& graph, const TriplaneTaps& taps, ad::Var f_emo_attn);

 private:
  FeaturePlanes planes_;
  std::array<ad::Parameter, 3> proj_;
};

/// Per scale: product over the three planes of the interpolated codes,
/// Hadamard-multiplied with that scale's projected feature; scales are
/// concatenated. `scale_features` holds three [1 x code_dim] nodes.
ad::Var encode_emotion(ad::Graph& graph, const TriplaneTaps& taps, FeaturePlanes& planes,
                       std::span<const ad::Var> scale_features);

/// Canonical centers mapped to [0, 1]^3 by their axis-aligned bounding box
/// (a degenerate axis maps to 0.5).
std::vector<Eigen::Vector3d> normalize_to_box(std::span<const Eigen::Vector3d> centers);

}  // namespace udgs::cond
