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

#include <cstdint>
#include <span>
#include <vector>

#include "udgs/ad/tensor.hpp"

namespace udgs::ad {

/// Handle to a node of a Graph.
struct Var {
  std::uint32_t id = 0;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kMatMul,
  kBroadcast,
  kExp,
  kLog,
  kRelu,
  kTanh,
  kSoftplus,
  kSoftmax,
  kPow,
  kSum,
  kMean,
  kSlice,
  kConcat,
  kQuadForm,
  kGatherRows,
};

/// Upstream gradient injected at a (possibly non-scalar) node.
struct Seed {
  Var var;
  std::span<const double> grad;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already a topological order and every input id precedes its
/// consumer. Binary elementwise ops broadcast size-1 rows/columns.
///
/// Reduction axes: -1 reduces everything to 1x1, 0 reduces rows to 1xN,
/// 1 reduces columns to Mx1.
class Graph {
 public:
  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad);
  /// Leaf whose gradient is added into `param.grad` by backward().
  Var param(Parameter& param);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var matmul(Var a, Var b);
  Var broadcast(Var a, std::size_t rows, std::size_t cols);
  Var exp(Var a);
  Var log(Var a);
  Var relu(Var a);
  Var tanh(Var a);
  Var softplus(Var a);
  /// Softmax along `axis`: 1 normalizes each row, 0 normalizes each column.
  Var softmax(Var a, int axis = 1);
  Var pow(Var a, double exponent);
  Var sum(Var a, int axis = -1);
  Var mean(Var a, int axis = -1);
  /// Columns (axis 1) or rows (axis 0) in [begin, end).
  Var slice(Var a, int axis, std::size_t begin, std::size_t end);
  Var concat(std::span<const Var> parts, int axis);
  /// Row-wise x_i^T A x_i for x [M x N], A [N x N]; result [M x 1].
  Var quad_form(Var x, Var a);
  /// out[p] = sum_k weight[p*K+k] * table[index[p*K+k]]; result [P x D].
  Var gather_rows(Var table, std::vector<std::uint32_t> index, std::vector<double> weight,
                  std::size_t per_row);
  /// gather_rows reading `table` in place; the backward pass scatters straight
  /// into table.grad, so large code grids are never copied onto the tape.
  Var gather_param(Parameter& table, std::vector<std::uint32_t> index, std::vector<double> weight,
                   std::size_t per_row);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient computed by the last backward(); zeros for non-participating nodes.
  std::span<const double> grad(Var v) const;
  OpKind kind(Var v) const { return nodes_[v.id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Backpropagates from a scalar loss. Throws ValidationError for a non-scalar loss.
  void backward(Var loss);
  void backward(std::span<const Seed> seeds);
  /// Throws ValidationError when an input id does not precede its consumer.
  void validate() const;

 private:
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    std::vector<double> grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    double scalar = 0.0;
    int axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::uint32_t> index;
    std::vector<double> weight;
  };

  Var push(Node node);
  static Node gather_node(const Tensor& table, std::vector<std::uint32_t> index,
                          std::vector<double> weight, std::size_t per_row);
  Var elementwise(OpKind op, Var a, Var b);
  Var unary(OpKind op, Var a);
  void backward_node(Node& node);
  std::vector<double>& grad_of(std::uint32_t id);

  std::vector<Node> nodes_;
};

}  // namespace udgs::ad
