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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fd.hpp"
#include "udgs/core/error.hpp"
#include "udgs/fusion/uncertainty.hpp"

using namespace udgs;
using namespace udgs::fusion;
using udgs::testing::central_difference;
using udgs::testing::relative_error;

namespace {

StateDistribution dist(std::vector<double> mean, std::vector<double> var) {
  StateDistribution d;
  d.mean = std::move(mean);
  d.variance = var;
  d.au = std::move(var);
  d.eu.assign(d.mean.size(), 0.0);
  return d;
}

StateDistribution random_dist(Rng& rng, std::size_t d) {
  std::vector<double> m(d), v(d);
  for (std::size_t i = 0; i < d; ++i) {
    m[i] = rng.uniform(-5, 5);
    v[i] = std::exp(rng.uniform(-3, 3));
  }
  return dist(m, v);
}

BlockConfig tiny_block() {
  BlockConfig c;
  c.state_dim = 3;
  c.feature_dim = 2;
  c.members = 3;
  c.hidden = 5;
  c.out_dim = 4;
  return c;
}

}  // namespace

TEST(Member, ZeroNetworkGivesZeroMeanAndLn2) {
  UncertaintyBlock block(View::kExp, tiny_block(), 1, "test");
  for (ad::Parameter* p : block.parameters()) p->value.fill(0.0);
  ad::Graph g;
  const auto m = block.member_forward(g, 0, g.constant(ad::Tensor::matrix(2, 3, 0.7)),
                                      g.constant(ad::Tensor::row({1.0, -2.0})));
  for (double x : g.value(m.mu).data()) EXPECT_EQ(x, 0.0);
  for (double x : g.value(m.sigma).data()) EXPECT_NEAR(x, std::log(2.0) + 1e-6, 1e-15);
}

TEST(Member, SigmaPositiveAndDeterministic) {
  Rng rng(2, "test.fusion.inputs");
  UncertaintyBlock a(View::kTone, tiny_block(), 5, "x"), b(View::kTone, tiny_block(), 5, "x");
  ad::Tensor state = ad::Tensor::matrix(6, 3);
  for (double& v : state.data()) v = rng.uniform(-50, 50);
  ad::Graph g;
  const auto ma = a.member_forward(g, 1, g.constant(state), g.constant(ad::Tensor::row({3, -9})));
  const auto mb = b.member_forward(g, 1, g.constant(state), g.constant(ad::Tensor::row({3, -9})));
  for (double x : g.value(ma.sigma).data()) EXPECT_GT(x, 0.0);
  EXPECT_EQ(g.value(ma.mu).storage(), g.value(mb.mu).storage());
  EXPECT_EQ(g.value(ma.sigma).storage(), g.value(mb.sigma).storage());
}

TEST(Member, DistinctMembersDiffer) {
  UncertaintyBlock block(View::kAudio, tiny_block(), 3, "y");
  EXPECT_NE(block.member(0).trunk.parameters()[0]->value.storage(),
            block.member(1).trunk.parameters()[0]->value.storage());
}

TEST(Aggregate, TwoMemberExample) {
  const std::vector<std::vector<double>> mu{{0.0}, {2.0}}, sigma{{1.0}, {1.0}};
  const StateDistribution d = block_aggregate(mu, sigma);
  EXPECT_EQ(d.mean[0], 1.0);
  EXPECT_EQ(d.eu[0], 1.0);
  EXPECT_EQ(d.au[0], 1.0);
  EXPECT_EQ(d.variance[0], 2.0);
}

TEST(Aggregate, IdenticalMembersHaveZeroEpistemic) {
  Rng rng(4, "test.fusion.identical");
  std::vector<double> m(8), s(8);
  for (std::size_t i = 0; i < 8; ++i) {
    m[i] = rng.uniform(-3, 3);
    s[i] = rng.uniform(0.1, 2);
  }
  const std::vector<std::vector<double>> mu(10, m), sigma(10, s);
  const StateDistribution d = block_aggregate(mu, sigma);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(d.eu[i], 0.0);
    EXPECT_EQ(d.variance[i], d.au[i]);
    EXPECT_NEAR(d.au[i], s[i], 1e-15);
  }
}

TEST(Aggregate, TranslationInvariance) {
  Rng rng(5, "test.fusion.shift");
  std::vector<std::vector<double>> mu(4, std::vector<double>(3)), sigma(4, std::vector<double>(3));
  for (auto& r : mu)
    for (double& x : r) x = rng.uniform(-1, 1);
  for (auto& r : sigma)
    for (double& x : r) x = rng.uniform(0.1, 1);
  auto shifted = mu;
  for (auto& r : shifted)
    for (double& x : r) x += 0.5;
  const auto a = block_aggregate(mu, sigma), b = block_aggregate(shifted, sigma);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(b.mean[i], a.mean[i] + 0.5, 1e-14);
    EXPECT_NEAR(b.eu[i], a.eu[i], 1e-14);
    EXPECT_EQ(b.au[i], a.au[i]);
  }
}

TEST(Aggregate, RejectsSingleMember) {
  const std::vector<std::vector<double>> one{{1.0}};
  EXPECT_THROW(block_aggregate(one, one), ValidationError);
}

TEST(Aggregate, DecompositionIdentityExact) {
  Rng rng(6, "test.fusion.decomp");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 2 + rng.below(10), d = 1 + rng.below(6);
    std::vector<std::vector<double>> mu(t, std::vector<double>(d)), sigma = mu;
    for (std::size_t k = 0; k < t; ++k)
      for (std::size_t i = 0; i < d; ++i) {
        mu[k][i] = rng.normal(0, 3);
        sigma[k][i] = std::exp(rng.normal());
      }
    const auto s = block_aggregate(mu, sigma);
    for (std::size_t i = 0; i < d; ++i) EXPECT_EQ(s.variance[i], s.au[i] + s.eu[i]);
  }
}

TEST(Aggregate, GraphMatchesPlainForm) {
  UncertaintyBlock block(View::kExp, tiny_block(), 7, "z");
  Rng rng(7, "test.fusion.graph");
  ad::Tensor state = ad::Tensor::matrix(2, 3);
  for (double& v : state.data()) v = rng.uniform(-1, 1);
  const ad::Tensor feat = ad::Tensor::row({0.3, -0.4});
  ad::Graph g;
  std::vector<std::vector<double>> mu, sigma;
  for (std::size_t t = 0; t < block.members(); ++t) {
    const auto m = block.member_forward(g, t, g.constant(state), g.constant(feat));
    mu.push_back(g.value(m.mu).storage());
    sigma.push_back(g.value(m.sigma).storage());
  }
  const StateVars v = block.forward(g, g.constant(state), g.constant(feat));
  const StateDistribution p = block_aggregate(mu, sigma);
  EXPECT_EQ(g.value(v.mean).storage(), p.mean);
  EXPECT_EQ(g.value(v.variance).storage(), p.variance);
  EXPECT_EQ(g.value(v.eu).storage(), p.eu);
  EXPECT_EQ(g.value(v.au).storage(), p.au);
}

TEST(Fuse, SingleViewIdentity) {
  const auto v = dist({1.5, -2}, {0.3, 4});
  const FusedState f = gaussian_fuse(std::vector{v});
  EXPECT_EQ(f.mean, v.mean);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(f.variance[i], v.variance[i], 1e-15);
}

TEST(Fuse, EqualVariances) {
  const FusedState f = gaussian_fuse(std::vector{dist({1}, {0.8}), dist({5}, {0.8})});
  EXPECT_NEAR(f.mean[0], 3.0, 1e-15);
  EXPECT_NEAR(f.variance[0], 0.4, 1e-15);
}

TEST(Fuse, WorkedExample) {
  const FusedState f = gaussian_fuse(std::vector{dist({0}, {1}), dist({3}, {2})});
  EXPECT_NEAR(f.variance[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(f.mean[0], 1.0, 1e-15);
}

TEST(Fuse, ReplicatedViews) {
  const auto v = dist({0.25, -1}, {0.5, 3});
  const FusedState f = gaussian_fuse(std::vector{v, v, v});
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(f.mean[i], v.mean[i], 1e-15);
    EXPECT_NEAR(f.variance[i], v.variance[i] / 3.0, 1e-15);
  }
}

TEST(Fuse, HugeVarianceDropsView) {
  Rng rng(8, "test.fusion.dropout");
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_dist(rng, 4), b = random_dist(rng, 4), c = random_dist(rng, 4);
    const FusedState rest = gaussian_fuse(std::vector{a, b});
    for (double& v : c.variance) v *= 1e6;
    const FusedState all = gaussian_fuse(std::vector{a, b, c});
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(all.mean[i], rest.mean[i], 1e-3);
      EXPECT_NEAR(all.variance[i], rest.variance[i], 1e-3);
    }
  }
}

TEST(Fuse, InvariantsOnRandomInstances) {
  Rng rng(9, "test.fusion.invariants");
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(4), d = 1 + rng.below(5);
    std::vector<StateDistribution> views;
    for (std::size_t i = 0; i < n; ++i) views.push_back(random_dist(rng, d));
    const FusedState f = gaussian_fuse(views);
    auto reversed = views;
    std::reverse(reversed.begin(), reversed.end());
    const FusedState r = gaussian_fuse(reversed);
    for (std::size_t k = 0; k < d; ++k) {
      double precision = 0.0, lo = 1e300, hi = -1e300;
      for (const auto& v : views) {
        precision += 1.0 / v.variance[k];
        lo = std::min(lo, v.mean[k]);
        hi = std::max(hi, v.mean[k]);
      }
      EXPECT_NEAR(1.0 / f.variance[k], precision, 1e-9 * precision);
      EXPECT_GE(f.mean[k], lo - 1e-12);
      EXPECT_LE(f.mean[k], hi + 1e-12);
      EXPECT_NEAR(r.mean[k], f.mean[k], 1e-12);
      EXPECT_NEAR(r.variance[k], f.variance[k], 1e-12);
    }
  }
}

TEST(Fuse, WeightMonotonicity) {
  Rng rng(10, "test.fusion.monotone");
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_dist(rng, 3), b = random_dist(rng, 3), c = random_dist(rng, 3);
    const FusedState rest = gaussian_fuse(std::vector{a, b});
    FusedState prev = gaussian_fuse(std::vector{a, b, c});
    for (int step = 0; step < 10; ++step) {
      for (double& v : c.variance) v *= 2.0;
      const FusedState next = gaussian_fuse(std::vector{a, b, c});
      for (std::size_t k = 0; k < 3; ++k)
        EXPECT_LE(std::abs(next.mean[k] - rest.mean[k]), std::abs(prev.mean[k] - rest.mean[k]) + 1e-12);
      prev = next;
    }
  }
}

TEST(Fuse, UniformIsPlainMean) {
  const FusedState f = uniform_fuse(std::vector{dist({0}, {1}), dist({3}, {2})});
  EXPECT_EQ(f.mean[0], 1.5);
  EXPECT_EQ(f.variance[0], 0.75);
}

TEST(Fuse, GraphMatchesPlainForm) {
  Rng rng(11, "test.fusion.graph_fuse");
  std::vector<StateDistribution> plain;
  std::vector<StateVars> vars;
  ad::Graph g;
  for (int i = 0; i < 3; ++i) {
    plain.push_back(random_dist(rng, 4));
    StateVars v;
    v.mean = g.constant(ad::Tensor::row(plain.back().mean));
    v.variance = g.constant(ad::Tensor::row(plain.back().variance));
    vars.push_back(v);
  }
  for (FusionMode mode : {FusionMode::kUncertainty, FusionMode::kUniform}) {
    const FusedVars f = fuse(g, vars, mode);
    const FusedState p = mode == FusionMode::kUncertainty ? gaussian_fuse(plain) : uniform_fuse(plain);
    EXPECT_EQ(g.value(f.mean).storage(), p.mean);
    EXPECT_EQ(g.value(f.variance).storage(), p.variance);
  }
}

TEST(FusionStack, MouthHasThreeViewsAndDeterministic) {
  BlockConfig base = tiny_block();
  const std::array<std::size_t, 4> dims{2, 3, 2, 4};
  FusionStack a(splat::Branch::kMouth, base, dims, 12), b(splat::Branch::kMouth, base, dims, 12);
  EXPECT_EQ(a.views().size(), 3u);
  EXPECT_EQ(FusionStack(splat::Branch::kFace, base, dims, 12).views().size(), 4u);
  ad::Graph g;
  std::array<std::optional<ad::Var>, 4> f;
  f[0] = g.constant(ad::Tensor::row({1, 2}));
  f[1] = g.constant(ad::Tensor::row({0.5, 0, -1}));
  f[2] = g.constant(ad::Tensor::row({3, 1}));
  const ad::Var state = g.constant(ad::Tensor::matrix(5, 3, 0.2));
  const auto ra = a.forward(g, state, f, FusionMode::kUncertainty);
  const auto rb = b.forward(g, state, f, FusionMode::kUncertainty);
  EXPECT_EQ(g.value(ra.fused.mean).storage(), g.value(rb.fused.mean).storage());
  f[1].reset();
  EXPECT_THROW(a.forward(g, state, f, FusionMode::kUniform), ValidationError);
}

TEST(FusionStack, MemberWeightGradients) {
  BlockConfig base = tiny_block();
  const std::array<std::size_t, 4> dims{2, 2, 2, 2};
  FusionStack stack(splat::Branch::kMouth, base, dims, 13);
  Rng rng(13, "test.fusion.grad");
  ad::Tensor state = ad::Tensor::matrix(3, 3);
  for (double& v : state.data()) v = rng.uniform(-1, 1);
  auto loss = [&](bool backward) {
    ad::Graph g;
    std::array<std::optional<ad::Var>, 4> f;
    for (int i = 0; i < 3; ++i) f[i] = g.constant(ad::Tensor::row({0.5 - i, 0.3 * i}));
    const auto r = stack.forward(g, g.constant(state), f, FusionMode::kUncertainty);
    const ad::Var l = g.add(g.sum(g.pow(r.fused.mean, 2.0)), g.sum(r.fused.variance));
    if (backward) g.backward(l);
    return g.value(l)[0];
  };
  const auto params = stack.parameters();
  for (ad::Parameter* p : params) p->zero_grad();
  loss(true);
  int probes = 0;
  for (std::size_t k = 0; k < params.size(); k += 5) {
    ad::Parameter* p = params[k];
    for (std::size_t i = 0; i < p->value.size(); i += 4) {
      const double fd = central_difference(p->value.storage(), i, [&] { return loss(false); });
      EXPECT_LT(relative_error(p->grad[i], fd), 1e-4) << p->name << "[" << i << "]";
      ++probes;
    }
  }
  EXPECT_GE(probes, 20);
}

TEST(FusionMode, Parse) {
  EXPECT_EQ(parse_fusion_mode("uniform"), FusionMode::kUniform);
  EXPECT_EQ(fusion_mode_name(FusionMode::kUncertainty), "uncertainty");
  EXPECT_THROW(parse_fusion_mode("mean"), ValidationError);
}
