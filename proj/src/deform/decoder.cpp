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

#include "udgs/deform/decoder.hpp"

#include <cmath>

#include "udgs/core/error.hpp"

namespace udgs::deform {

DeformDecoder::DeformDecoder(splat::Branch mode, const DecoderConfig& config, Rng& rng,
                             const std::string& name)
    : mode_(mode), config_(config) {
  using ad::Activation;
  trunk_ = ad::MlpBlock(name + ".trunk", {config.state_dim, config.hidden, config.hidden},
                        Activation::kRelu, Activation::kRelu, rng);
  position_ = ad::MlpBlock(name + ".pos", {config.hidden, 3}, Activation::kIdentity,
                           Activation::kIdentity, rng);
  if (mode == splat::Branch::kFace) {
    rotation_ = ad::MlpBlock(name + ".rot", {config.hidden, 4}, Activation::kIdentity,
                             Activation::kIdentity, rng);
    scale_ = ad::MlpBlock(name + ".scale", {config.hidden, 3}, Activation::kIdentity,
                          Activation::kIdentity, rng);
  }
  if (config.zero_heads)
    for (ad::Parameter* p : heads()) p->value.fill(0.0);
}

std::vector<ad::Parameter*> DeformDecoder::heads() {
  std::vector<ad::Parameter*> out = position_.parameters();
  if (mode_ == splat::Branch::kFace) {
    for (ad::Parameter* p : rotation_.parameters()) out.push_back(p);
    for (ad::Parameter* p : scale_.parameters()) out.push_back(p);
  }
  return out;
}

ad::MlpBlock& DeformDecoder::rotation_head() {
  require(mode_ == splat::Branch::kFace, "mouth decoder has no rotation head");
  return rotation_;
}

ad::MlpBlock& DeformDecoder::scale_head() {
  require(mode_ == splat::Branch::kFace, "mouth decoder has no scale head");
  return scale_;
}

std::vector<ad::Parameter*> DeformDecoder::parameters() {
  std::vector<ad::Parameter*> out = trunk_.parameters();
  for (ad::Parameter* p : position_.parameters()) out.push_back(p);
  if (mode_ == splat::Branch::kFace) {
    for (ad::Parameter* p : rotation_.parameters()) out.push_back(p);
    for (ad::Parameter* p : scale_.parameters()) out.push_back(p);
  }
  return out;
}

DeformDecoder::Vars DeformDecoder::forward(ad::Graph& g, ad::Var state) {
  require(g.value(state).cols() == config_.state_dim,
          "decoder state width " + std::to_string(g.value(state).cols()) + " != " +
              std::to_string(config_.state_dim));
  const ad::Var h = trunk_.forward(g, state);
  Vars out;
  out.position = g.scale(position_.forward(g, h), config_.position_gain);
  if (mode_ == splat::Branch::kFace) {
    out.rotation = g.scale(rotation_.forward(g, h), config_.rotation_gain);
    out.log_scale = g.scale(scale_.forward(g, h), config_.scale_gain);
  }
  return out;
}

DeformationDelta DeformDecoder::decode(std::span<const double> state) {
  ad::Graph g;
  const ad::Var s = g.constant(ad::Tensor({1, state.size()}, std::vector<double>(state.begin(), state.end())));
  const Vars v = forward(g, s);
  DeformationDelta d;
  for (int i = 0; i < 3; ++i) d.position[i] = g.value(v.position)[i];
  if (v.rotation)
    for (int i = 0; i < 4; ++i) d.rotation[i] = g.value(*v.rotation)[i];
  if (v.log_scale)
    for (int i = 0; i < 3; ++i) d.log_scale[i] = g.value(*v.log_scale)[i];
  return d;
}

AppliedDelta apply_delta(const splat::GaussianPrimitive& prim, const DeformationDelta& delta) {
  AppliedDelta out{prim, false};
  out.primitive.center = prim.center + delta.position;
  const Eigen::Vector4d q = prim.rotation + delta.rotation;
  const double norm = q.norm();
  if (norm < kMinQuaternionNorm) {
    out.primitive.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
    out.rotation_fallback = true;
  } else {
    out.primitive.rotation = q / norm;
  }
  out.primitive.scale = prim.scale.cwiseProduct(delta.log_scale.array().exp().matrix());
  return out;
}

ad::Var normalize_rows(ad::Graph& g, ad::Var q) {
  return g.mul(q, g.pow(g.sum(g.pow(q, 2.0), 1), -0.5));
}

DeformedVars apply_delta(ad::Graph& g, ad::Var center, ad::Var rotation, ad::Var log_scale,
                         const DeformDecoder::Vars& delta) {
  const std::size_t rows = g.value(center).rows();
  require(g.value(center).cols() == 3 && g.value(rotation).cols() == 4 &&
              g.value(log_scale).cols() == 3,
          "apply_delta: primitive fields must be [P x 3], [P x 4], [P x 3]");
  require(g.value(rotation).rows() == rows && g.value(log_scale).rows() == rows &&
              g.value(delta.position).rows() == rows,
          "apply_delta: row counts differ");
  DeformedVars out;
  out.center = g.add(center, delta.position);
  ad::Var q = delta.rotation ? g.add(rotation, *delta.rotation) : rotation;
  ad::Tensor rescue = ad::Tensor::matrix(rows, 4);
  const ad::Tensor& qv = g.value(q);
  for (std::size_t r = 0; r < rows; ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < 4; ++c) n2 += qv.at(r, c) * qv.at(r, c);
    if (std::sqrt(n2) < kMinQuaternionNorm) {
      rescue.at(r, 0) = 1.0;
      ++out.rotation_fallbacks;
    }
  }
  if (out.rotation_fallbacks > 0) q = g.add(q, g.constant(std::move(rescue)));
  out.rotation = normalize_rows(g, q);
  out.scale = g.exp(delta.log_scale ? g.add(log_scale, *delta.log_scale) : log_scale);
  return out;
}

}  // namespace udgs::deform
