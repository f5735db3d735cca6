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

#include <gtest/gtest.h>

#include <cmath>

#include "fd.hpp"
#include "udgs/core/error.hpp"
#include "udgs/deform/decoder.hpp"
#include "udgs/splat/rasterizer.hpp"

using namespace udgs;
using namespace udgs::deform;
using splat::Branch;
using udgs::testing::central_difference;
using udgs::testing::relative_error;

namespace {

DecoderConfig small() {
  DecoderConfig c;
  c.state_dim = 4;
  c.hidden = 6;
  c.zero_heads = false;
  return c;
}

splat::GaussianPrimitive some_primitive() {
  splat::GaussianPrimitive p;
  p.center = {0.1, -0.2, 2.0};
  p.scale = {0.3, 0.2, 0.1};
  p.rotation = Eigen::Vector4d(0.9, 0.1, -0.3, 0.2).normalized();
  p.opacity = 0.6;
  p.color = {0.2, 0.4, 0.6};
  return p;
}

}  // namespace

TEST(Decode, ZeroNetworkGivesZeroDelta) {
  Rng rng(1, "test.deform.zero");
  DeformDecoder dec(Branch::kFace, small(), rng, "d");
  for (ad::Parameter* p : dec.parameters()) p->value.fill(0.0);
  const DeformationDelta d = dec.decode(std::vector<double>{1, -2, 3, 0.5});
  EXPECT_EQ(d.position, Eigen::Vector3d::Zero());
  EXPECT_EQ(d.rotation, Eigen::Vector4d::Zero());
  EXPECT_EQ(d.log_scale, Eigen::Vector3d::Zero());
}

TEST(Decode, MouthEmitsPositionOnly) {
  Rng rng(2, "test.deform.mouth");
  DeformDecoder dec(Branch::kMouth, small(), rng, "m");
  EXPECT_THROW(dec.rotation_head(), ValidationError);
  EXPECT_THROW(dec.scale_head(), ValidationError);
  Rng in(3, "test.deform.states");
  for (int t = 0; t < 20; ++t) {
    std::vector<double> s(4);
    for (double& x : s) x = in.uniform(-5, 5);
    const DeformationDelta d = dec.decode(s);
    EXPECT_EQ(d.rotation, Eigen::Vector4d::Zero());
    EXPECT_EQ(d.log_scale, Eigen::Vector3d::Zero());
    EXPECT_NE(d.position, Eigen::Vector3d::Zero());
  }
  ad::Graph g;
  const auto v = dec.forward(g, g.constant(ad::Tensor::matrix(3, 4, 0.5)));
  EXPECT_FALSE(v.rotation.has_value());
  EXPECT_FALSE(v.log_scale.has_value());
}

TEST(Decode, TrunkGradientsForEveryHead) {
  Rng rng(4, "test.deform.grad");
  DeformDecoder dec(Branch::kFace, small(), rng, "f");
  const ad::Tensor state = ad::Tensor({2, 4}, {0.3, -0.1, 0.8, 0.2, -0.5, 0.4, 0.1, 0.9});
  for (int head = 0; head < 3; ++head) {
    auto loss = [&](bool backward) {
      ad::Graph g;
      const auto v = dec.forward(g, g.constant(state));
      const ad::Var out = head == 0 ? v.position : head == 1 ? *v.rotation : *v.log_scale;
      const ad::Var l = g.sum(g.tanh(g.scale(out, 10.0)));
      if (backward) g.backward(l);
      return g.value(l)[0];
    };
    for (ad::Parameter* p : dec.parameters()) p->zero_grad();
    loss(true);
    for (ad::Parameter* p : dec.trunk().parameters())
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double fd = central_difference(p->value.storage(), i, [&] { return loss(false); });
        EXPECT_LT(relative_error(p->grad[i], fd), 1e-4) << "head " << head << " " << p->name;
      }
  }
}

TEST(ApplyDelta, ZeroDeltaIsIdentity) {
  const auto p = some_primitive();
  const AppliedDelta a = apply_delta(p, DeformationDelta{});
  EXPECT_FALSE(a.rotation_fallback);
  EXPECT_EQ(a.primitive.center, p.center);
  EXPECT_LT((a.primitive.rotation - p.rotation).norm(), 1e-15);
  EXPECT_EQ(a.primitive.scale, p.scale);
  EXPECT_EQ(a.primitive.opacity, p.opacity);
  EXPECT_EQ(a.primitive.color, p.color);
}

TEST(ApplyDelta, Translation) {
  splat::GaussianPrimitive p;
  p.center = Eigen::Vector3d::Zero();
  DeformationDelta d;
  d.position = {1, 0, 0};
  EXPECT_EQ(apply_delta(p, d).primitive.center, Eigen::Vector3d(1, 0, 0));
}

TEST(ApplyDelta, QuaternionOffsetRenormalized) {
  splat::GaussianPrimitive p;
  for (double theta : {0.1, 0.7, 2.0, 3.0}) {
    DeformationDelta d;
    d.rotation = Eigen::Vector4d(0, 0, 0, std::tan(theta / 2));
    const auto r = apply_delta(p, d).primitive.rotation;
    EXPECT_NEAR(r.norm(), 1.0, 1e-12);
    const Eigen::Matrix3d m = splat::rotation_matrix(r);
    EXPECT_LT((m * m.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(m(0, 0), std::cos(theta), 1e-12);
    EXPECT_NEAR(m(1, 0), std::sin(theta), 1e-12);
  }
}

TEST(ApplyDelta, ScalePositiveAndFallback) {
  auto p = some_primitive();
  DeformationDelta d;
  d.log_scale = {-50, 0, 30};
  d.rotation = -p.rotation;
  const AppliedDelta a = apply_delta(p, d);
  EXPECT_TRUE((a.primitive.scale.array() > 0).all());
  EXPECT_TRUE(a.rotation_fallback);
  EXPECT_EQ(a.primitive.rotation, Eigen::Vector4d(1, 0, 0, 0));
}

TEST(ApplyDelta, GraphFormMatchesPlainForm) {
  Rng rng(5, "test.deform.graph");
  DeformDecoder dec(Branch::kFace, small(), rng, "g");
  const auto p = some_primitive();
  const std::vector<double> state{0.2, -0.6, 1.1, 0.4};
  const AppliedDelta plain = apply_delta(p, dec.decode(state));
  ad::Graph g;
  const auto v = dec.forward(g, g.constant(ad::Tensor::row(state)));
  const ad::Tensor center = ad::Tensor::row({p.center.x(), p.center.y(), p.center.z()});
  const ad::Tensor rot = ad::Tensor::row({p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3]});
  const ad::Tensor log_s = ad::Tensor::row({std::log(p.scale.x()), std::log(p.scale.y()), std::log(p.scale.z())});
  const DeformedVars out = apply_delta(g, g.constant(center), g.constant(rot), g.constant(log_s), v);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(g.value(out.center)[a], plain.primitive.center[a], 1e-15);
    EXPECT_NEAR(g.value(out.scale)[a], plain.primitive.scale[a], 1e-15);
  }
  for (int a = 0; a < 4; ++a) EXPECT_NEAR(g.value(out.rotation)[a], plain.primitive.rotation[a], 1e-15);
}

TEST(ApplyDelta, ZeroFinalLayerIsFixedPoint) {
  Rng rng(6, "test.deform.fixed");
  DeformDecoder dec(Branch::kFace, small(), rng, "z");
  for (ad::MlpBlock* head : {&dec.position_head(), &dec.rotation_head(), &dec.scale_head()})
    for (ad::Parameter* p : head->parameters()) p->value.fill(0.0);
  const auto p = some_primitive();
  for (int t = 0; t < 5; ++t) {
    std::vector<double> s(4);
    for (double& x : s) x = rng.uniform(-3, 3);
    const AppliedDelta a = apply_delta(p, dec.decode(s));
    EXPECT_EQ(a.primitive.center, p.center);
    EXPECT_LT((a.primitive.scale - p.scale).norm(), 1e-15);
    EXPECT_LT((a.primitive.rotation - p.rotation).norm(), 1e-15);
  }
}

TEST(ApplyDelta, UnitNormAfterRandomDeltas) {
  Rng rng(7, "test.deform.unit");
  for (int t = 0; t < 200; ++t) {
    auto p = some_primitive();
    DeformationDelta d;
    d.rotation = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    d.log_scale = {rng.normal(), rng.normal(), rng.normal()};
    const auto a = apply_delta(p, d).primitive;
    EXPECT_NEAR(a.rotation.norm(), 1.0, 1e-10);
    EXPECT_TRUE((a.scale.array() > 0).all());
  }
}

TEST(Decode, DefaultHeadsStartAtZero) {
  Rng rng(8, "test.deform.default");
  DeformDecoder dec(Branch::kFace, DecoderConfig{}, rng, "dflt");
  const DeformationDelta d = dec.decode(std::vector<double>(32, 0.7));
  EXPECT_EQ(d.position, Eigen::Vector3d::Zero());
  EXPECT_EQ(d.rotation, Eigen::Vector4d::Zero());
  EXPECT_EQ(d.log_scale, Eigen::Vector3d::Zero());
  EXPECT_NE(dec.trunk().parameters()[0]->value[0], 0.0);
}
