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

#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// Every op builds a node that remembers its parents and a closure computing
// their gradients. `backward(loss)` walks the nodes reachable from `loss` in
// reverse topological order and then releases the graph, so a second call on
// the same loss throws DoubleBackward. A graph belongs to one thread; frozen
// leaves (requires_grad == false) are never written and may be shared.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "peftner/rng.hpp"

namespace peftner::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t numel(const Shape& shape);

namespace detail {
struct Node;
struct Builder;
}

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const;

  std::span<const double> values() const;
  /// In-place access for optimizers and initializers; only valid on leaves.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// New leaf holding a copy of the values.
  Tensor detach(bool requires_grad = false) const;
  bool shares_storage_with(const Tensor& other) const { return node_ == other.node_; }

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend struct detail::Builder;
  std::shared_ptr<detail::Node> node_;
};

/// Fills gradients of every requires_grad leaf reachable from `loss`.
/// Throws NonScalarLoss or DoubleBackward.
void backward(const Tensor& loss);

// ---- primitives ----------------------------------------------------------

/// (m x k) * (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
/// (m x k) * (n x k)^T, the shape of a linear layer x W^T.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
/// Same shapes, or b a vector broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Softmax over the last dimension.
Tensor softmax_rows(const Tensor& a);
/// Per-row normalization followed by gain and bias (both length = last dim).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);
/// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when
/// `training` is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool training = true);
/// Rows of `table` selected by `ids`.
Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Entries where mask != 0 are replaced by `value` (and receive no gradient).
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);
Tensor sum(const Tensor& a);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// out(i, j) = a(i, index[i * cols + j]) for an n x cols index matrix.
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index, std::size_t cols);

/// Label-smoothed cross entropy over logit rows. Rows whose target is
/// negative are ignored. Per active row the loss is
/// (1 - eps) * -log p[target] + eps * mean_c(-log p[c]).
enum class Reduction { Mean, Sum };
Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                              double eps, Reduction reduction = Reduction::Mean);

// ---- gradient checking ---------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Relative error |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central differences of a scalar-valued f at x over every coordinate.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-5, double tol = 1e-4);

/// Same check over leaf parameters that `loss_fn` reads; values are perturbed
/// in place and restored.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, std::span<Tensor> params,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace peftner::ad
