// Copyright 2026 The peftner Authors
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

#include "peftner/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "peftner/error.hpp"

namespace peftner::ad {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

struct Builder {
  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
};

}  // namespace detail

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch,
              op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

std::size_t leading_rows(const Shape& s) {
  const std::size_t cols = last_dim(s);
  return cols == 0 ? 0 : numel(s) / cols;
}

void require_matrix(const std::string& op, const Tensor& a) {
  if (a.rank() != 2) shape_error(op, a.shape(), {});
}

/// Creates the output node; records parents and the closure only when some
/// input participates in differentiation.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward_fn);
  }
  return detail::Builder::wrap(std::move(node));
}

ConstMapMat view(const Tensor& t) {
  return ConstMapMat(t.values().data(), static_cast<Eigen::Index>(t.dim(0)),
                     static_cast<Eigen::Index>(t.dim(1)));
}

ConstMapMat view(const Node& n, const std::vector<double>& data) {
  return ConstMapMat(data.data(), static_cast<Eigen::Index>(n.shape[0]),
                     static_cast<Eigen::Index>(n.shape[1]));
}

MapMat grad_view(Node& n) {
  auto& g = n.grad_buffer();
  return MapMat(g.data(), static_cast<Eigen::Index>(n.shape[0]),
                static_cast<Eigen::Index>(n.shape[1]));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " needs " +
                                              std::to_string(ad::numel(shape)) + " values, got " +
                                              std::to_string(values.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> values(ad::numel(shape));
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->value[row * last_dim(node_->shape) + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  if (flag && node_->leaf) {
    node_->grad_buffer();
  } else if (!flag) {
    node_->grad.clear();
  }
}

bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

void Tensor::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
}

Tensor Tensor::detach(bool requires_grad) const { return Tensor(shape(), node_->value, requires_grad); }

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  Node* root = loss.node();
  if (root == nullptr || loss.numel() != 1) {
    throw Error(ErrorCode::NonScalarLoss,
                "backward needs a scalar loss, got " + (root ? shape_string(loss.shape()) : "undefined"));
  }
  if (root->released) throw Error(ErrorCode::DoubleBackward, "graph already consumed by backward");
  if (root->leaf || !root->requires_grad) {
    root->released = !root->leaf;
    return;
  }

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->leaf && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->released) throw Error(ErrorCode::DoubleBackward, "graph already consumed by backward");
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
  for (Node* node : order) {
    node->backward = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->released = true;
  }
}

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      view(a) * view(b);
  return make_result({m, n}, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = view(self, self.grad);
    if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb, pb.value).transpose();
    if (pb.requires_grad) grad_view(pb).noalias() += view(pa, pa.value).transpose() * g;
  });
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_transposed", a);
  require_matrix("matmul_transposed", b);
  if (a.dim(1) != b.dim(1)) shape_error("matmul_transposed", a.shape(), b.shape());
  const std::size_t m = a.dim(0), n = b.dim(0);
  std::vector<double> out(m * n);
  MapMat(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      view(a) * view(b).transpose();
  return make_result({m, n}, std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto g = view(self, self.grad);
    if (pa.requires_grad) grad_view(pa).noalias() += g * view(pb, pb.value);
    if (pb.requires_grad) grad_view(pb).noalias() += g.transpose() * view(pa, pa.value);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast && !(b.rank() == 1 && a.rank() >= 1 && b.dim(0) == last_dim(a.shape()))) {
    shape_error("add", a.shape(), b.shape());
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  const std::size_t cols = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[broadcast ? i % cols : i];
  return make_result(a.shape(), std::move(out), {a, b}, [broadcast](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      const std::size_t cols = g.size();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[broadcast ? i % cols : i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t cols = last_dim(a.shape());
  const std::size_t rows = leading_rows(a.shape());
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* dy = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t cols = last_dim(x.shape());
  const std::size_t rows = leading_rows(x.shape());
  if (gain.numel() != cols) shape_error("layer_norm gain", x.shape(), gain.shape());
  if (bias.numel() != cols) shape_error("layer_norm bias", x.shape(), bias.shape());
  std::vector<double> out(x.numel());
  // Normalized activations and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto in = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (xr[c] - mean) * is;
      (*xhat)[r * cols + c] = h;
      out[r * cols + c] = h * gv[c] + bv[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [rows, cols, xhat, inv_std](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto& dy = self.grad;
    if (pg.requires_grad || pb.requires_grad) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (pg.requires_grad) pg.grad_buffer()[c] += dy[r * cols + c] * (*xhat)[r * cols + c];
          if (pb.requires_grad) pb.grad_buffer()[c] += dy[r * cols + c];
        }
      }
    }
    if (px.requires_grad) {
      auto& gx = px.grad_buffer();
      const double n = static_cast<double>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_d = 0.0, sum_dh = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = dy[r * cols + c] * pg.value[c];
          sum_d += d;
          sum_dh += d * (*xhat)[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = dy[r * cols + c] * pg.value[c];
          gx[r * cols + c] +=
              (*inv_std)[r] * (d - sum_d / n - (*xhat)[r * cols + c] * sum_dh / n);
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = p.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw Error(ErrorCode::InvalidConfig, "dropout rate must be below 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  const auto in = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = in[i] * (*mask)[i];
  }
  return make_result(x.shape(), std::move(out), {x}, [mask](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix("embedding_lookup", table);
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  auto index = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  std::vector<double> out(ids.size() * cols);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw Error(ErrorCode::ShapeMismatch, "embedding id " + std::to_string(ids[i]) +
                                                " outside table " + shape_string(table.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * cols, cols, out.data() + i * cols);
  }
  return make_result({ids.size(), cols}, std::move(out), {table}, [index, cols](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < index->size(); ++i) {
      double* dst = g.data() + static_cast<std::size_t>((*index)[i]) * cols;
      const double* src = self.grad.data() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)) = view(a).transpose();
  return make_result({n, m}, std::move(out), {a}, [](Node& self) {
    grad_view(*self.parents[0]) += view(self, self.grad).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (ad::numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.numel()) shape_error("masked_fill", a.shape(), {mask.size()});
  auto keep = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  return make_result(a.shape(), std::move(out), {a}, [keep](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(*keep)[i]) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return make_result({}, {total}, {a}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix("slice_cols", a);
  if (begin + count > a.dim(1)) shape_error("slice_cols", a.shape(), {begin, count});
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(rows * count);
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(in.data() + r * cols + begin, count, out.data() + r * count);
  }
  return make_result({rows, count}, std::move(out), {a}, [rows, cols, begin, count](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) g[r * cols + begin + c] += self.grad[r * count + c];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.dim(0) != rows) shape_error("concat_cols", parts[0].shape(), p.shape());
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.values().data() + r * w, w, out.data() + r * total + offset);
    }
    offset += w;
  }
  return make_result({rows, total}, std::move(out), parts, [rows, total](Node& self) {
    std::size_t offset = 0;
    for (auto& parent : self.parents) {
      const std::size_t w = parent->shape[1];
      if (parent->requires_grad) {
        auto& g = parent->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total + offset + c];
        }
      }
      offset += w;
    }
  });
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index, std::size_t cols) {
  require_matrix("gather_cols", a);
  const std::size_t rows = a.dim(0), width = a.dim(1);
  if (index.size() != rows * cols) shape_error("gather_cols", a.shape(), {index.size()});
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  std::vector<double> out(rows * cols);
  const auto in = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t src = index[r * cols + c];
      if (src >= width) shape_error("gather_cols index", a.shape(), {src});
      out[r * cols + c] = in[r * width + src];
    }
  }
  return make_result({rows, cols}, std::move(out), {a}, [idx, rows, cols, width](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * width + (*idx)[r * cols + c]] += self.grad[r * cols + c];
    }
  });
}

Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, double eps,
                              Reduction reduction) {
  require_matrix("smoothed_cross_entropy", logits);
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (targets.size() != rows) shape_error("smoothed_cross_entropy", logits.shape(), {targets.size()});
  if (!(eps >= 0.0 && eps < 1.0)) throw Error(ErrorCode::InvalidConfig, "label smoothing must be in [0, 1)");
  auto probs = std::make_shared<std::vector<double>>(logits.numel());
  auto tgt = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
  const auto in = logits.values();
  double total = 0.0;
  std::size_t active = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = in.data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t c = 0; c < k; ++c) denom += std::exp(z[c] - mx);
    const double lse = mx + std::log(denom);
    for (std::size_t c = 0; c < k; ++c) (*probs)[r * k + c] = std::exp(z[c] - lse);
    if (targets[r] < 0) continue;
    if (static_cast<std::size_t>(targets[r]) >= k) {
      throw Error(ErrorCode::ShapeMismatch, "target " + std::to_string(targets[r]) + " outside " +
                                                std::to_string(k) + " classes");
    }
    double mean_nll = 0.0;
    for (std::size_t c = 0; c < k; ++c) mean_nll += lse - z[c];
    mean_nll /= static_cast<double>(k);
    total += (1.0 - eps) * (lse - z[targets[r]]) + eps * mean_nll;
    ++active;
  }
  if (active == 0) throw Error(ErrorCode::AllIgnored, "every target row is ignored");
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(active) : 1.0;
  return make_result({}, {total * norm}, {logits}, [probs, tgt, rows, k, eps, norm](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double upstream = self.grad[0] * norm;
    const double uniform = eps / static_cast<double>(k);
    for (std::size_t r = 0; r < rows; ++r) {
      if ((*tgt)[r] < 0) continue;
      for (std::size_t c = 0; c < k; ++c) {
        double target_mass = uniform;
        if (static_cast<std::int32_t>(c) == (*tgt)[r]) target_mass += 1.0 - eps;
        g[r * k + c] += upstream * ((*probs)[r * k + c] - target_mass);
      }
    }
  });
}

// ---- gradient checking ------------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params, double h,
                           double tol) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic[t][i], numeric));
      ++report.coordinates;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h,
                           double tol) {
  std::vector<Tensor> params{x.detach(true)};
  return grad_check([&] { return f(params[0]); }, params, h, tol);
}

}  // namespace peftner::ad
