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
#include <vector>

#include "udgs/splat/camera.hpp"
#include "udgs/splat/gaussian.hpp"
#include "udgs/splat/image.hpp"

namespace udgs::splat {

inline constexpr double kNearPlane = 1e-4;
inline constexpr double kMinCovDeterminant = 1e-12;
inline constexpr double kMaxAlpha = 0.999;
/// A primitive touches a pixel only where its Mahalanobis distance is <= 3.
inline constexpr double kSupportMahalanobisSq = 9.0;
inline constexpr int kTileSize = 16;

/// Rotation matrix of a unit (w, x, y, z) quaternion.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q);

/// R diag(s)^2 R^T. Throws ValidationError for a quaternion whose norm is off
/// by more than 1e-6 or for non-positive scales.
Eigen::Matrix3d covariance_from(const Eigen::Vector3d& scale, const Eigen::Vector4d& rotation);

struct Projection {
  bool visible = false;  // false: behind the near plane
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double depth = 0.0;
};

/// Perspective splat of one primitive. The quaternion is normalized first.
Projection project(const GaussianPrimitive& primitive, const Camera& camera);

/// exp(-0.5 d^T cov^-1 d) with d = pixel - mean; nullopt when cov is singular.
std::optional<double> gaussian_weight(const Eigen::Vector2d& pixel, const Eigen::Vector2d& mean,
                                      const Eigen::Matrix2d& cov);

/// Front-to-back alpha compositing over `background` (size = color channels).
/// Depth ties are broken by primitive index; empty input yields the background.
Image rasterize(std::span<const GaussianPrimitive> primitives, const Camera& camera,
                std::span<const double> background);

struct PrimitiveGrad {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
  double opacity = 0.0;
  std::vector<double> color;
};

/// Vector-Jacobian product of rasterize() with `upstream` (same layout as the image).
std::vector<PrimitiveGrad> rasterize_grad(std::span<const GaussianPrimitive> primitives,
                                          const Camera& camera,
                                          std::span<const double> background,
                                          const Image& upstream);

}  // namespace udgs::splat
