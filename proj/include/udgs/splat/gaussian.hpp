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
#include <cstdint>
#include <string_view>
#include <vector>

namespace udgs::splat {

enum class Branch : std::uint8_t { kFace, kMouth };

std::string_view branch_name(Branch branch);
Branch parse_branch(std::string_view name);

/// One anisotropic 3D Gaussian. Rotation is a (w, x, y, z) quaternion.
struct GaussianPrimitive {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Ones();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
  double opacity = 1.0;
  std::vector<double> color;
};

/// Primitives plus their (immutable) branch tags.
class Scene {
 public:
  Scene() = default;
  Scene(std::vector<GaussianPrimitive> primitives, std::vector<Branch> branches);

  const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
  std::vector<GaussianPrimitive>& primitives() { return primitives_; }
  const std::vector<Branch>& branches() const { return branches_; }
  std::size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }
  std::size_t color_channels() const;
  /// Indices of primitives tagged with `branch`, in scene order.
  std::vector<std::size_t> indices_of(Branch branch) const;
  /// Throws ValidationError when a primitive breaks its invariants.
  void validate() const;

 private:
  std::vector<GaussianPrimitive> primitives_;
  std::vector<Branch> branches_;
};

}  // namespace udgs::splat
