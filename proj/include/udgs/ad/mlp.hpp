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

#include <string>
#include <vector>

#include "udgs/ad/graph.hpp"
#include "udgs/core/rng.hpp"

namespace udgs::ad {

enum class Activation { kRelu, kTanh, kSoftplus, kIdentity };

/// Floor added after a softplus output so variance heads stay strictly positive.
inline constexpr double kVarianceFloor = 1e-6;

/// Glorot-uniform weight init: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                      std::size_t cols, Rng& rng);

/// Fully connected stack. `widths` = {in, hidden..., out}. Hidden layers use
/// `hidden`; the last layer uses `output`. A softplus output adds kVarianceFloor.
class MlpBlock {
 public:
  MlpBlock() = default;
  MlpBlock(const std::string& name, std::vector<std::size_t> widths, Activation hidden,
           Activation output, Rng& rng);

  /// x: [rows x in] -> [rows x out]
  Var forward(Graph& graph, Var x);
  /// forward(concat(a, b)) without materializing the concatenation. Row counts
  /// may differ when one side has a single row; that row is shared by all.
  Var forward_split(Graph& graph, Var a, Var b);

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t in_dim() const { return widths_.front(); }
  std::size_t out_dim() const { return widths_.back(); }
  std::vector<Parameter*> parameters();

 private:
  std::vector<std::size_t> widths_;
  Activation hidden_ = Activation::kRelu;
  Activation output_ = Activation::kIdentity;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

Var activate(Graph& graph, Var x, Activation act);

}  // namespace udgs::ad
