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

#include "udgs/ad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "udgs/core/error.hpp"
#include "udgs/simd/kernels.hpp"

namespace udgs::ad {
namespace {

struct Broadcast2d {
  std::size_t rows, cols;
  std::size_t a_rows, a_cols, b_rows, b_cols;

  std::size_t a_index(std::size_t r, std::size_t c) const {
    return (a_rows == 1 ? 0 : r) * a_cols + (a_cols == 1 ? 0 : c);
  }
  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (b_rows == 1 ? 0 : r) * b_cols + (b_cols == 1 ? 0 : c);
  }
};

std::size_t broadcast_dim(std::size_t x, std::size_t y, const char* what) {
  if (x == y || y == 1) return x;
  if (x == 1) return y;
  throw ValidationError(std::string("incompatible ") + what + " for broadcasting: " +
                        std::to_string(x) + " vs " + std::to_string(y));
}

Broadcast2d broadcast_shape(const Tensor& a, const Tensor& b) {
  Broadcast2d s{};
  s.a_rows = a.rows();
  s.a_cols = a.cols();
  s.b_rows = b.rows();
  s.b_cols = b.cols();
  s.rows = broadcast_dim(s.a_rows, s.b_rows, "rows");
  s.cols = broadcast_dim(s.a_cols, s.b_cols, "columns");
  return s;
}

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double power(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  if (p == -1.0) return 1.0 / x;
  if (p == 0.5) return std::sqrt(x);
  return std::pow(x, p);
}

}  // namespace

Var Graph::push(Node node) {
  for (std::uint32_t in : node.inputs) {
    if (nodes_[in].needs_grad) node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Tensor value) { return leaf(std::move(value), false); }

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = OpKind::kLeaf;
  value.requires_grad = requires_grad;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Graph::param(Parameter& p) {
  Node n;
  n.op = OpKind::kLeaf;
  n.value = p.value;
  n.needs_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Var Graph::elementwise(OpKind op, Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  Node n;
  n.op = op;
  n.inputs = {a.id, b.id};
  if (x.same_shape(y)) {
    n.value = Tensor(x.shape());
    auto out = n.value.data();
    auto xd = x.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = op == OpKind::kAdd ? xd[i] + yd[i] : op == OpKind::kSub ? xd[i] - yd[i] : xd[i] * yd[i];
    }
    return push(std::move(n));
  }
  const Broadcast2d s = broadcast_shape(x, y);
  n.value = Tensor::matrix(s.rows, s.cols);
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      const double xv = x[s.a_index(r, c)];
      const double yv = y[s.b_index(r, c)];
      n.value.at(r, c) = op == OpKind::kAdd ? xv + yv : op == OpKind::kSub ? xv - yv : xv * yv;
    }
  }
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) { return elementwise(OpKind::kAdd, a, b); }
Var Graph::sub(Var a, Var b) { return elementwise(OpKind::kSub, a, b); }
Var Graph::mul(Var a, Var b) { return elementwise(OpKind::kMul, a, b); }

Var Graph::unary(OpKind op, Var a) {
  Node n;
  n.op = op;
  n.inputs = {a.id};
  const Tensor& x = value(a);
  n.value = Tensor(x.shape());
  auto out = n.value.data();
  auto in = x.data();
  switch (op) {
    case OpKind::kExp:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case OpKind::kLog:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::log(in[i]);
      break;
    case OpKind::kRelu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      break;
    case OpKind::kTanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case OpKind::kSoftplus:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = softplus_value(in[i]);
      break;
    default:
      throw ValidationError("not a unary op");
  }
  return push(std::move(n));
}

Var Graph::exp(Var a) { return unary(OpKind::kExp, a); }
Var Graph::log(Var a) { return unary(OpKind::kLog, a); }
Var Graph::relu(Var a) { return unary(OpKind::kRelu, a); }
Var Graph::tanh(Var a) { return unary(OpKind::kTanh, a); }
Var Graph::softplus(Var a) { return unary(OpKind::kSoftplus, a); }

Var Graph::scale(Var a, double factor) {
  Node n;
  n.op = OpKind::kScale;
  n.inputs = {a.id};
  n.scalar = factor;
  n.value = value(a);
  n.value.requires_grad = false;
  for (double& x : n.value.data()) x *= factor;
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double offset) {
  Node n;
  n.op = OpKind::kAddScalar;
  n.inputs = {a.id};
  n.scalar = offset;
  n.value = value(a);
  n.value.requires_grad = false;
  for (double& x : n.value.data()) x += offset;
  return push(std::move(n));
}

Var Graph::pow(Var a, double exponent) {
  Node n;
  n.op = OpKind::kPow;
  n.inputs = {a.id};
  n.scalar = exponent;
  n.value = value(a);
  n.value.requires_grad = false;
  for (double& x : n.value.data()) x = power(x, exponent);
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require(x.cols() == y.rows(),
          "matmul shape mismatch " + x.shape_string() + " * " + y.shape_string());
  Node n;
  n.op = OpKind::kMatMul;
  n.inputs = {a.id, b.id};
  n.value = Tensor::matrix(x.rows(), y.cols());
  simd::kernels().gemm_nn(x.rows(), y.cols(), x.cols(), x.data().data(), y.data().data(),
                          n.value.data().data(), false);
  return push(std::move(n));
}

Var Graph::broadcast(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& x = value(a);
  require((x.rows() == rows || x.rows() == 1) && (x.cols() == cols || x.cols() == 1),
          "cannot broadcast " + x.shape_string() + " to [" + std::to_string(rows) + "x" +
              std::to_string(cols) + "]");
  Node n;
  n.op = OpKind::kBroadcast;
  n.inputs = {a.id};
  n.value = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      n.value.at(r, c) = x.at(x.rows() == 1 ? 0 : r, x.cols() == 1 ? 0 : c);
    }
  }
  return push(std::move(n));
}

Var Graph::softmax(Var a, int axis) {
  const Tensor& x = value(a);
  require(axis == 0 || axis == 1, "softmax axis must be 0 or 1");
  Node n;
  n.op = OpKind::kSoftmax;
  n.inputs = {a.id};
  n.axis = axis;
  n.value = Tensor(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  // Groups are rows (axis 1) or columns (axis 0); stride walks within a group.
  const std::size_t groups = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t stride = axis == 1 ? 1 : cols;
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    const std::size_t base = axis == 1 ? gidx * cols : gidx;
    double peak = x[base];
    for (std::size_t i = 1; i < len; ++i) peak = std::max(peak, x[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[base + i * stride] - peak);
      n.value[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) n.value[base + i * stride] /= total;
  }
  return push(std::move(n));
}

Var Graph::sum(Var a, int axis) {
  const Tensor& x = value(a);
  require(axis >= -1 && axis <= 1, "reduction axis must be -1, 0 or 1");
  Node n;
  n.op = OpKind::kSum;
  n.inputs = {a.id};
  n.axis = axis;
  const std::size_t rows = x.rows(), cols = x.cols();
  if (axis == -1) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    n.value = Tensor::scalar(s);
  } else if (axis == 0) {
    n.value = Tensor::matrix(1, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) n.value[c] += x.at(r, c);
  } else {
    n.value = Tensor::matrix(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += x.at(r, c);
      n.value[r] = s;
    }
  }
  return push(std::move(n));
}

Var Graph::mean(Var a, int axis) {
  const Tensor& x = value(a);
  const double count = axis == -1 ? static_cast<double>(x.size())
                       : axis == 0 ? static_cast<double>(x.rows())
                                   : static_cast<double>(x.cols());
  Var s = sum(a, axis);
  nodes_[s.id].op = OpKind::kMean;
  nodes_[s.id].scalar = 1.0 / count;
  for (double& v : nodes_[s.id].value.data()) v /= count;
  return s;
}

Var Graph::slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const Tensor& x = value(a);
  require(axis == 0 || axis == 1, "slice axis must be 0 or 1");
  const std::size_t extent = axis == 1 ? x.cols() : x.rows();
  require(begin < end && end <= extent, "slice range out of bounds");
  Node n;
  n.op = OpKind::kSlice;
  n.inputs = {a.id};
  n.axis = axis;
  n.begin = begin;
  n.end = end;
  if (axis == 1) {
    n.value = Tensor::matrix(x.rows(), end - begin);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) n.value.at(r, c - begin) = x.at(r, c);
  } else {
    n.value = Tensor::matrix(end - begin, x.cols());
    std::copy(x.data().begin() + begin * x.cols(), x.data().begin() + end * x.cols(),
              n.value.data().begin());
  }
  return push(std::move(n));
}

Var Graph::concat(std::span<const Var> parts, int axis) {
  require(!parts.empty(), "concat of zero tensors");
  require(axis == 0 || axis == 1, "concat axis must be 0 or 1");
  Node n;
  n.op = OpKind::kConcat;
  n.axis = axis;
  std::size_t rows = value(parts[0]).rows(), cols = value(parts[0]).cols();
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    n.inputs.push_back(p.id);
    if (axis == 1) {
      require(t.rows() == rows, "concat row mismatch");
      total += t.cols();
    } else {
      require(t.cols() == cols, "concat column mismatch");
      total += t.rows();
    }
  }
  if (axis == 1) {
    n.value = Tensor::matrix(rows, total);
    std::size_t offset = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(&t.data()[r * t.cols()], t.cols(), &n.value.data()[r * total + offset]);
      offset += t.cols();
    }
  } else {
    n.value = Tensor::matrix(total, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
      const Tensor& t = value(p);
      std::copy(t.data().begin(), t.data().end(), n.value.data().begin() + offset);
      offset += t.size();
    }
  }
  return push(std::move(n));
}

Var Graph::quad_form(Var x, Var a) {
  const Tensor& xs = value(x);
  const Tensor& m = value(a);
  const std::size_t dim = xs.cols();
  require(m.rows() == dim && m.cols() == dim, "quad_form needs a square matrix matching x");
  Node n;
  n.op = OpKind::kQuadForm;
  n.inputs = {x.id, a.id};
  n.value = Tensor::matrix(xs.rows(), 1);
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) s += xs.at(r, i) * m.at(i, j) * xs.at(r, j);
    n.value[r] = s;
  }
  return push(std::move(n));
}

Var Graph::gather_rows(Var table, std::vector<std::uint32_t> index, std::vector<double> weight,
                       std::size_t per_row) {
  Node n = gather_node(value(table), std::move(index), std::move(weight), per_row);
  n.inputs = {table.id};
  return push(std::move(n));
}

Var Graph::gather_param(Parameter& table, std::vector<std::uint32_t> index,
                        std::vector<double> weight, std::size_t per_row) {
  require(table.grad.same_shape(table.value), "gather_param: parameter gradient not allocated");
  Node n = gather_node(table.value, std::move(index), std::move(weight), per_row);
  n.param = &table;
  n.needs_grad = true;
  return push(std::move(n));
}

Graph::Node Graph::gather_node(const Tensor& t, std::vector<std::uint32_t> index,
                               std::vector<double> weight, std::size_t per_row) {
  require(per_row > 0 && index.size() == weight.size() && index.size() % per_row == 0,
          "gather_rows index/weight layout mismatch");
  const std::size_t out_rows = index.size() / per_row;
  const std::size_t dim = t.cols();
  Node n;
  n.op = OpKind::kGatherRows;
  n.value = Tensor::matrix(out_rows, dim);
  for (std::size_t p = 0; p < out_rows; ++p) {
    double* out = &n.value.data()[p * dim];
    for (std::size_t k = 0; k < per_row; ++k) {
      const std::uint32_t row = index[p * per_row + k];
      require(row < t.rows(), "gather_rows index out of range");
      const double w = weight[p * per_row + k];
      const double* src = &t.data()[row * dim];
      for (std::size_t d = 0; d < dim; ++d) out[d] += w * src[d];
    }
  }
  n.index = std::move(index);
  n.weight = std::move(weight);
  n.begin = per_row;
  return n;
}

std::span<const double> Graph::grad(Var v) const { return nodes_[v.id].grad; }

std::vector<double>& Graph::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::validate() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (std::uint32_t in : nodes_[i].inputs) {
      if (in >= i) throw ValidationError("graph cycle: node " + std::to_string(i) +
                                         " consumes node " + std::to_string(in));
    }
  }
}

void Graph::backward(Var loss) {
  require(value(loss).size() == 1,
          "backward() needs a scalar loss, got " + value(loss).shape_string());
  const double one = 1.0;
  const Seed seed{loss, std::span<const double>(&one, 1)};
  backward(std::span<const Seed>(&seed, 1));
}

void Graph::backward(std::span<const Seed> seeds) {
  validate();
  for (Node& n : nodes_) {
    if (n.needs_grad) {
      n.grad.assign(n.value.size(), 0.0);
    } else {
      n.grad.clear();
    }
  }
  for (const Seed& s : seeds) {
    require(s.grad.size() == nodes_[s.var.id].value.size(), "seed gradient size mismatch");
    if (!nodes_[s.var.id].needs_grad) continue;
    std::vector<double>& g = nodes_[s.var.id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s.grad[i];
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.op == OpKind::kLeaf) {
      if (n.param != nullptr) {
        auto pg = n.param->grad.data();
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
      continue;
    }
    backward_node(n);
  }
}

void Graph::backward_node(Node& n) {
  const std::vector<double>& g = n.grad;
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  switch (n.op) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& y = nodes_[n.inputs[1]].value;
      const double sign_b = n.op == OpKind::kSub ? -1.0 : 1.0;
      std::vector<double>* gx = wants(0) ? &grad_of(n.inputs[0]) : nullptr;
      std::vector<double>* gy = wants(1) ? &grad_of(n.inputs[1]) : nullptr;
      if (x.same_shape(y)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (n.op == OpKind::kMul) {
            if (gx) (*gx)[i] += g[i] * y[i];
            if (gy) (*gy)[i] += g[i] * x[i];
          } else {
            if (gx) (*gx)[i] += g[i];
            if (gy) (*gy)[i] += sign_b * g[i];
          }
        }
        break;
      }
      const Broadcast2d s = broadcast_shape(x, y);
      for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) {
          const double gv = g[r * s.cols + c];
          const std::size_t ia = s.a_index(r, c), ib = s.b_index(r, c);
          if (n.op == OpKind::kMul) {
            if (gx) (*gx)[ia] += gv * y[ib];
            if (gy) (*gy)[ib] += gv * x[ia];
          } else {
            if (gx) (*gx)[ia] += gv;
            if (gy) (*gy)[ib] += sign_b * gv;
          }
        }
      }
      break;
    }
    case OpKind::kScale: {
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += n.scalar * g[i];
      break;
    }
    case OpKind::kAddScalar:
    case OpKind::kBroadcast: {
      auto& gx = grad_of(n.inputs[0]);
      if (n.op == OpKind::kAddScalar) {
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        break;
      }
      const Tensor& x = nodes_[n.inputs[0]].value;
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          gx[(x.rows() == 1 ? 0 : r) * x.cols() + (x.cols() == 1 ? 0 : c)] += g[r * cols + c];
      break;
    }
    case OpKind::kMatMul: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
      const auto& kern = simd::kernels();
      if (wants(0)) kern.gemm_nt_acc(m, k, cols, g.data(), b.data().data(), grad_of(n.inputs[0]).data());
      if (wants(1)) kern.gemm_tn_acc(m, cols, k, a.data().data(), g.data(), grad_of(n.inputs[1]).data());
      break;
    }
    case OpKind::kExp: {
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.value[i];
      break;
    }
    case OpKind::kLog: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
      break;
    }
    case OpKind::kRelu: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
      break;
    }
    case OpKind::kTanh: {
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case OpKind::kSoftplus: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sigmoid(x[i]);
      break;
    }
    case OpKind::kSoftmax: {
      auto& gx = grad_of(n.inputs[0]);
      const std::size_t rows = n.value.rows(), cols = n.value.cols();
      const std::size_t groups = n.axis == 1 ? rows : cols;
      const std::size_t len = n.axis == 1 ? cols : rows;
      const std::size_t stride = n.axis == 1 ? 1 : cols;
      for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        const std::size_t base = n.axis == 1 ? gidx * cols : gidx;
        double dotp = 0.0;
        for (std::size_t i = 0; i < len; ++i) dotp += g[base + i * stride] * n.value[base + i * stride];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t j = base + i * stride;
          gx[j] += n.value[j] * (g[j] - dotp);
        }
      }
      break;
    }
    case OpKind::kPow: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      const double p = n.scalar;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = p == 2.0    ? 2.0 * x[i]
                         : p == -1.0 ? -n.value[i] * n.value[i]
                                     : p * power(x[i], p - 1.0);
        gx[i] += g[i] * d;
      }
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      const double f = n.op == OpKind::kMean ? n.scalar : 1.0;
      const std::size_t rows = x.rows(), cols = x.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double gv = n.axis == -1 ? g[0] : n.axis == 0 ? g[c] : g[r];
          gx[r * cols + c] += f * gv;
        }
      }
      break;
    }
    case OpKind::kSlice: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      auto& gx = grad_of(n.inputs[0]);
      if (n.axis == 1) {
        const std::size_t w = n.end - n.begin;
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gx[r * x.cols() + n.begin + c] += g[r * w + c];
      } else {
        const std::size_t offset = n.begin * x.cols();
        for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t total_cols = n.value.cols();
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const Tensor& part = nodes_[n.inputs[k]].value;
        if (wants(k)) {
          auto& gp = grad_of(n.inputs[k]);
          if (n.axis == 1) {
            for (std::size_t r = 0; r < part.rows(); ++r)
              for (std::size_t c = 0; c < part.cols(); ++c)
                gp[r * part.cols() + c] += g[r * total_cols + offset + c];
          } else {
            for (std::size_t i = 0; i < part.size(); ++i) gp[i] += g[offset + i];
          }
        }
        offset += n.axis == 1 ? part.cols() : part.size();
      }
      break;
    }
    case OpKind::kQuadForm: {
      const Tensor& x = nodes_[n.inputs[0]].value;
      const Tensor& m = nodes_[n.inputs[1]].value;
      const std::size_t dim = x.cols();
      std::vector<double>* gx = wants(0) ? &grad_of(n.inputs[0]) : nullptr;
      std::vector<double>* gm = wants(1) ? &grad_of(n.inputs[1]) : nullptr;
      for (std::size_t r = 0; r < x.rows(); ++r) {
        const double gv = g[r];
        for (std::size_t i = 0; i < dim; ++i) {
          for (std::size_t j = 0; j < dim; ++j) {
            if (gx) (*gx)[r * dim + i] += gv * (m.at(i, j) + m.at(j, i)) * x.at(r, j);
            if (gm) (*gm)[i * dim + j] += gv * x.at(r, i) * x.at(r, j);
          }
        }
      }
      break;
    }
    case OpKind::kGatherRows: {
      std::span<double> gt = n.param != nullptr ? n.param->grad.data()
                                                : std::span<double>(grad_of(n.inputs[0]));
      const std::size_t dim = n.value.cols();
      const std::size_t per_row = n.begin;
      for (std::size_t p = 0; p < n.value.rows(); ++p) {
        for (std::size_t k = 0; k < per_row; ++k) {
          const std::size_t row = n.index[p * per_row + k];
          const double w = n.weight[p * per_row + k];
          for (std::size_t d = 0; d < dim; ++d) gt[row * dim + d] += w * g[p * dim + d];
        }
      }
      break;
    }
    case OpKind::kLeaf:
      break;
  }
}

}  // namespace udgs::ad
