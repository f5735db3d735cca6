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

#include "udgs/splat/gaussian.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "udgs/core/error.hpp"
#include "udgs/splat/camera.hpp"

namespace udgs::splat {

std::string_view branch_name(Branch branch) {
  return branch == Branch::kFace ? "face" : "mouth";
}

Branch parse_branch(std::string_view name) {
  if (name == "face") return Branch::kFace;
  if (name == "mouth") return Branch::kMouth;
  throw ValidationError("unknown branch tag '" + std::string(name) + "'");
}

Scene::Scene(std::vector<GaussianPrimitive> primitives, std::vector<Branch> branches)
    : primitives_(std::move(primitives)), branches_(std::move(branches)) {
  require(primitives_.size() == branches_.size(), "scene needs one branch tag per primitive");
}

std::size_t Scene::color_channels() const {
  return primitives_.empty() ? 3 : primitives_.front().color.size();
}

std::vector<std::size_t> Scene::indices_of(Branch branch) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < branches_.size(); ++i)
    if (branches_[i] == branch) out.push_back(i);
  return out;
}

void Scene::validate() const {
  const std::size_t z = color_channels();
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    const auto& p = primitives_[i];
    const std::string where = "primitive " + std::to_string(i) + ": ";
    require(p.center.allFinite() && p.scale.allFinite() && p.rotation.allFinite(),
            where + "non-finite geometry");
    require((p.scale.array() > 0.0).all(), where + "scales must be positive");
    require(std::abs(p.rotation.norm() - 1.0) <= 1e-6, where + "quaternion must be unit");
    require(p.opacity >= 0.0 && p.opacity <= 1.0, where + "opacity outside [0,1]");
    require(p.color.size() == z, where + "inconsistent color channel count");
    for (double c : p.color) require(c >= 0.0 && c <= 1.0, where + "color outside [0,1]");
  }
}

void Camera::validate() const {
  require(fx > 0.0 && fy > 0.0, "camera focal lengths must be positive");
  require(width > 0 && height > 0, "camera image size must be positive");
  const Eigen::Matrix3d rrt = rotation * rotation.transpose();
  require((rrt - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9,
          "camera rotation must be orthonormal");
  require(translation.allFinite(), "camera translation must be finite");
}

}  // namespace udgs::splat
