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

#include "udgs/ad/mlp.hpp"

#include <cmath>

#include "udgs/core/error.hpp"

namespace udgs::ad {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                      std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::matrix(rows, cols);
  for (double& x : t.data()) x = rng.uniform(-a, a);
  return t;
}

Var activate(Graph& graph, Var x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return graph.relu(x);
    case Activation::kTanh:
      return graph.tanh(x);
    case Activation::kSoftplus:
      return graph.add_scalar(graph.softplus(x), kVarianceFloor);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

MlpBlock::MlpBlock(const std::string& name, std::vector<std::size_t> widths,
                   Activation hidden, Activation output, Rng& rng)
    : widths_(std::move(widths)), hidden_(hidden), output_(output) {
  require(widths_.size() >= 2, "MlpBlock needs at least input and output widths");
  for (std::size_t w : widths_) require(w > 0, "MlpBlock widths must be positive");
  const std::size_t layers = widths_.size() - 1;
  weights_.reserve(layers);
  biases_.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    weights_.emplace_back(name + ".w" + std::to_string(l), glorot_uniform(in, out, in, out, rng));
    biases_.emplace_back(name + ".b" + std::to_string(l), glorot_uniform(in, out, 1, out, rng));
  }
}

Var MlpBlock::forward(Graph& graph, Var x) {
  require(graph.value(x).cols() == in_dim(),
          "MlpBlock input width " + std::to_string(graph.value(x).cols()) + " != " +
              std::to_string(in_dim()));
  Var h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = graph.add(graph.matmul(h, graph.param(weights_[l])), graph.param(biases_[l]));
    h = activate(graph, h, l + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

Var MlpBlock::forward_split(Graph& graph, Var a, Var b) {
  const std::size_t a_cols = graph.value(a).cols();
  require(a_cols + graph.value(b).cols() == in_dim(),
          "MlpBlock split input widths " + std::to_string(a_cols) + " + " +
              std::to_string(graph.value(b).cols()) + " != " + std::to_string(in_dim()));
  const Var w = graph.param(weights_[0]);
  Var h = graph.add(graph.matmul(a, graph.slice(w, 0, 0, a_cols)),
                    graph.matmul(b, graph.slice(w, 0, a_cols, in_dim())));
  h = activate(graph, graph.add(h, graph.param(biases_[0])),
               weights_.size() == 1 ? output_ : hidden_);
  for (std::size_t l = 1; l < weights_.size(); ++l) {
    h = graph.add(graph.matmul(h, graph.param(weights_[l])), graph.param(biases_[l]));
    h = activate(graph, h, l + 1 == weights_.size() ? output_ : hidden_);
  }
  return h;
}

std::vector<Parameter*> MlpBlock::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

}  // namespace udgs::ad
