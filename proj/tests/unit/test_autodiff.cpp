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
#include <functional>

#include "fd.hpp"
#include "udgs/ad/adam.hpp"
#include "udgs/ad/graph.hpp"
#include "udgs/ad/mlp.hpp"
#include "udgs/core/error.hpp"
#include "udgs/core/rng.hpp"

using namespace udgs;
using namespace udgs::ad;
using udgs::testing::central_difference;
using udgs::testing::relative_error;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::matrix(r, c);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

// Projects an arbitrary-shaped output onto a fixed random direction so the
// whole Jacobian is exercised through one scalar.
using Builder = std::function<Var(Graph&, std::vector<Var>&)>;

double projected(std::vector<Tensor>& inputs, const Builder& build, const Tensor* direction,
                 std::vector<std::vector<double>>* grads) {
  Graph g;
  std::vector<Var> vars;
  for (Tensor& t : inputs) vars.push_back(g.leaf(t, true));
  const Var out = build(g, vars);
  Tensor dir = direction ? *direction : Tensor(g.value(out).shape(), 1.0);
  const Var loss = g.sum(g.mul(out, g.constant(dir)));
  if (grads) {
    g.backward(loss);
    grads->clear();
    for (Var v : vars) grads->emplace_back(g.grad(v).begin(), g.grad(v).end());
  }
  return g.value(loss)[0];
}

void expect_gradients_match(std::vector<Tensor> inputs, const Builder& build, Rng& rng,
                            double tol = 1e-4) {
  Tensor dir;
  {
    Graph g;
    std::vector<Var> vars;
    for (Tensor& t : inputs) vars.push_back(g.leaf(t, true));
    const Tensor& out = g.value(build(g, vars));
    dir = Tensor(out.shape(), 0.0);
    for (double& x : dir.data()) x = rng.uniform(-1.0, 1.0);
  }
  std::vector<std::vector<double>> grads;
  projected(inputs, build, &dir, &grads);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<double>& x = inputs[k].storage();
      const double fd =
          central_difference(x, i, [&] { return projected(inputs, build, &dir, nullptr); });
      EXPECT_LT(relative_error(grads[k][i], fd), tol)
          << "input " << k << " entry " << i << ": ad " << grads[k][i] << " fd " << fd;
    }
  }
}

}  // namespace

TEST(Backward, SquareAtThree) {
  Graph g;
  const Var x = g.leaf(Tensor::scalar(3.0), true);
  g.backward(g.mul(x, x));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 6.0);
}

TEST(Backward, ConstantHasZeroGradient) {
  Graph g;
  const Var x = g.leaf(Tensor::scalar(3.0), true);
  const Var c = g.constant(Tensor::scalar(5.0));
  g.backward(g.add(c, g.scale(x, 0.0)));
  EXPECT_EQ(g.grad(x)[0], 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  Graph g;
  const Var x = g.leaf(Tensor::matrix(2, 2, 1.0), true);
  EXPECT_THROW(g.backward(x), ValidationError);
}

TEST(Backward, ParamGradientsAccumulate) {
  Parameter p("p", Tensor::scalar(2.0));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    const Var x = g.param(p);
    g.backward(g.mul(x, x));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 8.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Graph, ValidatesTopologicalOrder) {
  Graph g;
  const Var a = g.leaf(Tensor::scalar(1.0), true);
  g.add(a, g.exp(a));
  EXPECT_NO_THROW(g.validate());
}

TEST(Graph, BroadcastShapeMismatchThrows) {
  Graph g;
  const Var a = g.constant(Tensor::matrix(2, 3));
  const Var b = g.constant(Tensor::matrix(3, 2));
  EXPECT_THROW(g.add(a, b), ValidationError);
  EXPECT_THROW(g.matmul(a, a), ValidationError);
}

class OpGradient : public ::testing::TestWithParam<int> {};

// Ten seeded restarts per op family.
TEST_P(OpGradient, ElementwiseAndBroadcast) {
  Rng rng(100 + GetParam(), "test.ad.elementwise");
  std::vector<Tensor> in{random_tensor(3, 4, rng, -1, 1), random_tensor(1, 4, rng, -1, 1),
                         random_tensor(3, 1, rng, -1, 1)};
  expect_gradients_match(in, [](Graph& g, std::vector<Var>& v) {
    const Var a = g.add(v[0], v[1]);
    const Var b = g.sub(a, v[2]);
    const Var c = g.mul(b, v[1]);
    return g.add_scalar(g.scale(g.mul(c, v[2]), 1.5), 0.25);
  }, rng);
}

TEST_P(OpGradient, Unary) {
  Rng rng(200 + GetParam(), "test.ad.unary");
  Tensor x = random_tensor(3, 3, rng, 0.2, 1.5);
  // Keep relu away from its kink.
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
  Tensor pos = random_tensor(3, 3, rng, 0.5, 2.0);
  expect_gradients_match({x, pos}, [](Graph& g, std::vector<Var>& v) {
    const Var a = g.add(g.exp(v[0]), g.tanh(v[0]));
    const Var b = g.add(g.relu(v[0]), g.softplus(v[0]));
    const Var c = g.add(g.log(v[1]), g.pow(v[1], 1.7));
    return g.add(g.mul(a, b), g.mul(c, g.pow(v[1], -1.0)));
  }, rng);
}

TEST_P(OpGradient, MatmulAndBroadcastOp) {
  Rng rng(300 + GetParam(), "test.ad.matmul");
  expect_gradients_match({random_tensor(3, 5, rng, -1, 1), random_tensor(5, 2, rng, -1, 1),
                          random_tensor(1, 2, rng, -1, 1)},
                         [](Graph& g, std::vector<Var>& v) {
                           return g.add(g.matmul(v[0], v[1]), g.broadcast(v[2], 3, 2));
                         },
                         rng);
}

TEST_P(OpGradient, SoftmaxBothAxes) {
  Rng rng(400 + GetParam(), "test.ad.softmax");
  expect_gradients_match({random_tensor(4, 3, rng, -2, 2)}, [](Graph& g, std::vector<Var>& v) {
    return g.add(g.softmax(v[0], 1), g.softmax(v[0], 0));
  }, rng);
}

TEST_P(OpGradient, Reductions) {
  Rng rng(500 + GetParam(), "test.ad.reduce");
  expect_gradients_match({random_tensor(3, 4, rng, -1, 1)}, [](Graph& g, std::vector<Var>& v) {
    const Var rows = g.sum(v[0], 0);   // 1x4
    const Var cols = g.mean(v[0], 1);  // 3x1
    const Var all = g.add(g.sum(v[0]), g.mean(v[0]));
    return g.add(g.add(g.matmul(cols, rows), all), g.mul(v[0], v[0]));
  }, rng);
}

TEST_P(OpGradient, SliceAndConcat) {
  Rng rng(600 + GetParam(), "test.ad.slice");
  expect_gradients_match({random_tensor(4, 5, rng, -1, 1)}, [](Graph& g, std::vector<Var>& v) {
    const Var left = g.slice(v[0], 1, 0, 2);
    const Var right = g.slice(v[0], 1, 2, 5);
    const Var top = g.slice(v[0], 0, 1, 3);
    const std::vector<Var> parts{g.exp(right), g.mul(left, left)};
    const Var wide = g.concat(parts, 1);
    const std::vector<Var> rows{wide, g.tanh(top)};
    return g.concat(rows, 0);
  }, rng);
}

TEST_P(OpGradient, QuadForm) {
  Rng rng(700 + GetParam(), "test.ad.quad");
  expect_gradients_match({random_tensor(4, 3, rng, -1, 1), random_tensor(3, 3, rng, -1, 1)},
                         [](Graph& g, std::vector<Var>& v) { return g.quad_form(v[0], v[1]); },
                         rng);
}

TEST_P(OpGradient, GatherRows) {
  Rng rng(800 + GetParam(), "test.ad.gather");
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
  for (int p = 0; p < 3; ++p)
    for (int k = 0; k < 4; ++k) {
      index.push_back(static_cast<std::uint32_t>(rng.below(6)));
      weight.push_back(rng.uniform(0.0, 1.0));
    }
  expect_gradients_match({random_tensor(6, 2, rng, -1, 1)}, [&](Graph& g, std::vector<Var>& v) {
    return g.gather_rows(v[0], index, weight, 4);
  }, rng);
}

INSTANTIATE_TEST_SUITE_P(Restarts, OpGradient, ::testing::Range(0, 10));

TEST(GatherParam, MatchesGatherRowsAndScattersIntoParameter) {
  Rng rng(9, "test.ad.gather_param");
  Parameter table("table", random_tensor(5, 3, rng, -1, 1));
  const std::vector<std::uint32_t> index{0, 4, 4, 2};
  const std::vector<double> weight{0.25, 0.75, 0.5, 0.5};
  Graph g;
  const Var direct = g.gather_param(table, index, weight, 2);
  const Var copied = g.gather_rows(g.constant(table.value), index, weight, 2);
  for (std::size_t i = 0; i < g.value(direct).size(); ++i)
    EXPECT_EQ(g.value(direct)[i], g.value(copied)[i]);
  g.backward(g.sum(direct));
  EXPECT_DOUBLE_EQ(table.grad.at(4, 1), 0.75 + 0.5);
  EXPECT_DOUBLE_EQ(table.grad.at(1, 0), 0.0);
}

TEST(Mlp, GradientMatchesFiniteDifferencesOnEveryParameter) {
  Rng rng(11, "test.ad.mlp");
  MlpBlock mlp("m", {4, 6, 3}, Activation::kTanh, Activation::kIdentity, rng);
  const Tensor x = random_tensor(2, 4, rng, -1, 1);
  auto loss = [&](bool backward) {
    Graph g;
    const Var out = g.sum(g.pow(mlp.forward(g, g.constant(x)), 2.0));
    if (backward) g.backward(out);
    return g.value(out)[0];
  };
  for (Parameter* p : mlp.parameters()) p->zero_grad();
  loss(true);
  for (Parameter* p : mlp.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double fd = central_difference(p->value.storage(), i, [&] { return loss(false); });
      EXPECT_LT(relative_error(p->grad[i], fd), 1e-4) << p->name << "[" << i << "]";
    }
  }
}

TEST(Mlp, ForwardSplitEqualsForwardOnConcatenation) {
  Rng rng(12, "test.ad.split");
  MlpBlock mlp("m", {5, 4, 2}, Activation::kRelu, Activation::kIdentity, rng);
  const Tensor a = random_tensor(3, 2, rng, -1, 1);
  const Tensor b = random_tensor(1, 3, rng, -1, 1);
  Graph g;
  const Var split = mlp.forward_split(g, g.constant(a), g.constant(b));
  const std::vector<Var> parts{g.constant(a), g.broadcast(g.constant(b), 3, 3)};
  const Var joined = mlp.forward(g, g.concat(parts, 1));
  for (std::size_t i = 0; i < g.value(split).size(); ++i)
    EXPECT_NEAR(g.value(split)[i], g.value(joined)[i], 1e-14);
}

TEST(Mlp, GlorotBound) {
  Rng rng(13, "test.ad.glorot");
  const Tensor w = glorot_uniform(30, 20, 30, 20, rng);
  const double a = std::sqrt(6.0 / 50.0);
  for (double x : w.data()) EXPECT_LE(std::abs(x), a);
}

TEST(Softplus, OutputHeadStrictlyPositive) {
  Graph g;
  Tensor x = Tensor::row({-800.0, -50.0, -1.0, 0.0, 1.0, 50.0, 800.0});
  const Tensor& y = g.value(activate(g, g.constant(x), Activation::kSoftplus));
  for (double v : y.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_NEAR(y[3], std::log(2.0) + kVarianceFloor, 1e-15);
}

TEST(Linearity, GradientOfSumIsSumOfGradients) {
  Rng rng(14, "test.ad.linearity");
  const Tensor x0 = random_tensor(2, 3, rng, 0.1, 1.0);
  auto grad_of = [&](int which) {
    Graph g;
    const Var x = g.leaf(x0, true);
    const Var l1 = g.sum(g.exp(x));
    const Var l2 = g.mean(g.mul(g.log(x), x));
    g.backward(which == 0 ? l1 : which == 1 ? l2 : g.add(l1, l2));
    return std::vector<double>(g.grad(x).begin(), g.grad(x).end());
  };
  const auto a = grad_of(0), b = grad_of(1), both = grad_of(2);
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], a[i] + b[i], 1e-14);
}

TEST(Adam, ZeroGradientLeavesParametersAndMoments) {
  Parameter p("p", Tensor::row({1.0, -2.0}));
  AdamState s;
  std::vector<Parameter*> params{&p};
  adam_step(params, s);
  EXPECT_EQ(p.value[0], 1.0);
  EXPECT_EQ(p.value[1], -2.0);
  for (double m : s.first_moment[0].data()) EXPECT_EQ(m, 0.0);
  for (double v : s.second_moment[0].data()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, FirstStepMagnitude) {
  Parameter p("p", Tensor::scalar(0.0));
  p.grad[0] = 1.0;
  AdamState s;
  s.config.lr = 0.1;
  std::vector<Parameter*> params{&p};
  adam_step(params, s);
  EXPECT_NEAR(p.value[0], -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    Rng rng(15, "test.ad.adam");
    Parameter p("p", random_tensor(3, 3, rng, -1, 1));
    AdamState s;
    std::vector<Parameter*> params{&p};
    for (int i = 0; i < 5; ++i) {
      for (double& g : p.grad.data()) g = rng.normal();
      adam_step(params, s);
    }
    return p.value.storage();
  };
  EXPECT_EQ(run(), run());
}
