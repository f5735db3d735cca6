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

#include "udgs/cond/triplane.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "udgs/ad/mlp.hpp"
#include "udgs/core/error.hpp"

namespace udgs::cond {

namespace {
constexpr const char* kPlaneNames[3] = {"xy", "xz", "yz"};
}

FeaturePlanes::FeaturePlanes(std::size_t base_resolution, std::size_t code_dim, Rng& rng,
                             double init_jitter)
    : base_(base_resolution), code_dim_(code_dim) {
  require(base_resolution >= 2, "FeaturePlanes: base resolution must be at least 2");
  require(code_dim >= 1, "FeaturePlanes: code dimension must be positive");
  planes_.reserve(9);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t res = resolution(s);
    for (std::size_t p = 0; p < 3; ++p) {
      ad::Tensor codes = ad::Tensor::matrix(res * res, code_dim);
      for (double& v : codes.data()) v = 1.0 + rng.uniform(-init_jitter, init_jitter);
      planes_.emplace_back("planes.s" + std::to_string(kPlaneScales[s]) + "." + kPlaneNames[p],
                           std::move(codes));
    }
  }
}

std::vector<ad::Parameter*> FeaturePlanes::parameters() {
  std::vector<ad::Parameter*> out;
  for (ad::Parameter& p : planes_) out.push_back(&p);
  return out;
}

PlaneTaps FeaturePlanes::taps(std::size_t scale_index, std::size_t plane_index,
                              std::span<const Eigen::Vector3d> positions) const {
  const std::size_t res = resolution(scale_index);
  const int a0 = kPlaneAxes[plane_index][0];
  const int a1 = kPlaneAxes[plane_index][1];
  PlaneTaps out;
  out.index.reserve(positions.size() * 4);
  out.weight.reserve(positions.size() * 4);
  const double span = static_cast<double>(res - 1);
  for (const Eigen::Vector3d& pos : positions) {
    const double u = std::clamp(pos[a0], 0.0, 1.0) * span;
    const double v = std::clamp(pos[a1], 0.0, 1.0) * span;
    const std::size_t i0 = std::min(static_cast<std::size_t>(u), res - 2);
    const std::size_t j0 = std::min(static_cast<std::size_t>(v), res - 2);
    const double fu = u - static_cast<double>(i0);
    const double fv = v - static_cast<double>(j0);
    const auto node = [res](std::size_t i, std::size_t j) {
      return static_cast<std::uint32_t>(j * res + i);
    };
    out.index.insert(out.index.end(),
                     {node(i0, j0), node(i0 + 1, j0), node(i0, j0 + 1), node(i0 + 1, j0 + 1)});
    out.weight.insert(out.weight.end(),
                      {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv});
  }
  return out;
}

TriplaneTaps FeaturePlanes::taps(std::span<const Eigen::Vector3d> positions) const {
  TriplaneTaps out;
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t p = 0; p < 3; ++p) out[s][p] = taps(s, p, positions);
  return out;
}

ad::Var encode_emotion(ad::Graph& g, const TriplaneTaps& taps, FeaturePlanes& planes,
                       std::span<const ad::Var> scale_features) {
  require(scale_features.size() == 3, "encode_emotion: need one projected feature per scale");
  std::vector<ad::Var> slices;
  for (std::size_t s = 0; s < 3; ++s) {
    require(g.value(scale_features[s]).size() == planes.code_dim(),
            "encode_emotion: projected feature width must equal the code dimension");
    ad::Var product{};
    for (std::size_t p = 0; p < 3; ++p) {
      const PlaneTaps& t = taps[s][p];
      const ad::Var code = g.gather_param(planes.plane(s, p), t.index, t.weight, 4);
      product = p == 0 ? code : g.mul(product, code);
    }
    slices.push_back(g.mul(product, scale_features[s]));
  }
  return g.concat(slices, 1);
}

EmotionField::EmotionField(std::size_t base_resolution, std::size_t code_dim, std::size_t attn_dim,
                           Rng& rng)
    : planes_(base_resolution, code_dim, rng) {
  for (std::size_t s = 0; s < 3; ++s)
    proj_[s] = ad::Parameter("planes.proj.s" + std::to_string(kPlaneScales[s]),
                             ad::glorot_uniform(attn_dim, code_dim, attn_dim, code_dim, rng));
}

std::vector<ad::Parameter*> EmotionField::parameters() {
  std::vector<ad::Parameter*> out = planes_.parameters();
  for (ad::Parameter& p : proj_) out.push_back(&p);
  return out;
}

ad::Var EmotionField::encode(ad::Graph& g, const TriplaneTaps& taps, ad::Var f_emo_attn) {
  std::array<ad::Var, 3> features;
  for (std::size_t s = 0; s < 3; ++s) features[s] = g.matmul(f_emo_attn, g.param(proj_[s]));
  return encode_emotion(g, taps, planes_, features);
}

std::vector<Eigen::Vector3d> normalize_to_box(std::span<const Eigen::Vector3d> centers) {
  std::vector<Eigen::Vector3d> out(centers.size(), Eigen::Vector3d::Constant(0.5));
  if (centers.empty()) return out;
  Eigen::Vector3d lo = centers[0], hi = centers[0];
  for (const Eigen::Vector3d& c : centers) {
    lo = lo.cwiseMin(c);
    hi = hi.cwiseMax(c);
  }
  for (std::size_t i = 0; i < centers.size(); ++i)
    for (int a = 0; a < 3; ++a) {
      const double extent = hi[a] - lo[a];
      out[i][a] = extent > 0 ? (centers[i][a] - lo[a]) / extent : 0.5;
    }
  return out;
}

}  // namespace udgs::cond
