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

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace peftner::ad {
namespace {

using testing::code_of;

// Scalar probe: sum(y * w) for fixed random w, so every output coordinate
// gets a distinct upstream gradient.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = Tensor::randn(y.shape(), rng, 1.0);
  return sum(mul(y, w));
}

void expect_primitive_passes(const std::string& name,
                             const std::function<Tensor(const Tensor&)>& op,
                             const Shape& shape) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const auto x = Tensor::randn(shape, rng, 1.0);
    const auto report = grad_check([&](const Tensor& t) { return probe(op(t), seed + 100); }, x, 1e-5, 1e-4);
    EXPECT_TRUE(report.passed) << name << " seed " << seed << " error " << report.max_rel_error;
    EXPECT_LE(report.max_rel_error, 1e-4) << name;
    EXPECT_EQ(report.coordinates, numel(shape));
  }
}

TEST(Tensor, ConstructionChecksShape) {
  EXPECT_EQ(code_of([] { Tensor({2, 2}, {1, 2, 3}); }), ErrorCode::ShapeMismatch);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(shape_string(t.shape()), "(2, 3)");
  EXPECT_EQ(code_of([&] { (void)t.item(); }), ErrorCode::ShapeMismatch);
}

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  const auto s = softmax_rows(Tensor::zeros({1, 3}));
  for (double v : s.values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Backward, SquareAtThree) {
  Tensor x({1}, {3.0}, true);
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, SumGivesOnes) {
  Tensor w({3}, {0.5, -1.0, 2.0}, true);
  backward(sum(w));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, DetachedLossLeavesZeroGrad) {
  Tensor w({3}, {0.5, -1.0, 2.0}, true);
  backward(sum(w.detach()));
  for (double g : w.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, FanOutAccumulates) {
  Tensor x({2}, {1.0, 2.0}, true);
  backward(sum(add(scale(x, 2.0), scale(x, 3.0))));
  EXPECT_EQ(x.grad()[0], 5.0);
  EXPECT_EQ(x.grad()[1], 5.0);
}

TEST(Backward, Errors) {
  Tensor x({2}, {1.0, 2.0}, true);
  EXPECT_EQ(code_of([&] { backward(scale(x, 2.0)); }), ErrorCode::NonScalarLoss);
  const auto loss = sum(scale(x, 2.0));
  backward(loss);
  EXPECT_EQ(code_of([&] { backward(loss); }), ErrorCode::DoubleBackward);
}

TEST(Backward, SoftmaxCrossEntropyClosedForm) {
  Rng rng(5);
  const auto logits = Tensor::randn({4, 3}, rng, 1.0, true);
  const std::int32_t targets[] = {0, 2, 1, 1};
  backward(smoothed_cross_entropy(logits, targets, 0.0));
  const auto p = softmax_rows(logits.detach());
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double expected = (p.at(r, c) - (static_cast<std::int32_t>(c) == targets[r] ? 1.0 : 0.0)) / 4.0;
      EXPECT_NEAR(logits.grad()[r * 3 + c], expected, 1e-14);
    }
  }
}

TEST(Primitives, ShapeMismatchNamesShapes) {
  const auto a = Tensor::zeros({2, 3});
  const auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("(2, 3)"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { add(a, Tensor::zeros({2})); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { mul(a, Tensor::zeros({3, 2})); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { reshape(a, {4}); }), ErrorCode::ShapeMismatch);
  const std::int32_t bad[] = {2};
  EXPECT_EQ(code_of([&] { embedding_lookup(a, bad); }), ErrorCode::ShapeMismatch);
}

TEST(GradCheck, SumOfSquares) {
  Rng rng(9);
  const auto x = Tensor::randn({5, 4}, rng, 1.0);
  const auto report = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
  EXPECT_LE(report.max_rel_error, 1e-7);
}

TEST(GradCheck, ConstantFunction) {
  Rng rng(9);
  const auto x = Tensor::randn({3}, rng, 1.0);
  const auto report = grad_check([](const Tensor&) { return sum(Tensor::full({2}, 4.0)); }, x);
  EXPECT_EQ(report.max_rel_error, 0.0);
  EXPECT_TRUE(report.passed);
}

TEST(GradCheck, DetectsWrongGradient) {
  // detach() hides the dependency, so the analytic gradient is zero while the
  // numeric one is not.
  Rng rng(9);
  const auto x = Tensor::randn({3}, rng, 1.0);
  const auto report = grad_check(
      [](const Tensor& t) { return add(sum(t), scale(sum(mul(t.detach(), t.detach())), 1.0)); }, x);
  EXPECT_FALSE(report.passed);
}

TEST(GradCheck, EveryPrimitiveOnTenSeeds) {
  Rng wr(77);
  const auto w = Tensor::randn({4, 5}, wr, 1.0);
  const auto gain = Tensor::randn({5}, wr, 1.0);
  const auto bias = Tensor::randn({5}, wr, 1.0);
  const std::int32_t ids[] = {2, 0, 2, 5, 1};
  const std::uint8_t mask[] = {1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 1, 1, 0};
  const std::size_t gidx[] = {0, 4, 4, 2, 1, 1, 3, 0};
  const std::int32_t targets[] = {1, -1, 4, 0};

  expect_primitive_passes("matmul", [&](const Tensor& x) { return matmul(x, transpose(w)); }, {3, 5});
  expect_primitive_passes("matmul rhs", [&](const Tensor& x) { return matmul(w, x); }, {5, 3});
  expect_primitive_passes("matmul_transposed", [&](const Tensor& x) { return matmul_transposed(x, w); }, {3, 5});
  expect_primitive_passes("add", [&](const Tensor& x) { return add(x, x); }, {4, 5});
  expect_primitive_passes("add broadcast", [&](const Tensor& x) { return add(w, x); }, {5});
  expect_primitive_passes("mul", [&](const Tensor& x) { return mul(x, w); }, {4, 5});
  expect_primitive_passes("scale", [&](const Tensor& x) { return scale(x, -1.7); }, {4, 5});
  expect_primitive_passes("softmax", [&](const Tensor& x) { return softmax_rows(x); }, {4, 5});
  expect_primitive_passes("layer_norm x", [&](const Tensor& x) { return layer_norm(x, gain, bias, 1e-12); },
                          {4, 5});
  expect_primitive_passes("layer_norm gain", [&](const Tensor& g) { return layer_norm(w, g, bias, 1e-12); },
                          {5});
  expect_primitive_passes("layer_norm bias", [&](const Tensor& b) { return layer_norm(w, gain, b, 1e-12); },
                          {5});
  expect_primitive_passes("gelu", [&](const Tensor& x) { return gelu(x); }, {4, 5});
  expect_primitive_passes("dropout",
                          [&](const Tensor& x) {
                            Rng r(3);
                            return dropout(x, 0.3, r);
                          },
                          {4, 5});
  expect_primitive_passes("embedding", [&](const Tensor& t) { return embedding_lookup(t, ids); }, {6, 4});
  expect_primitive_passes("transpose", [&](const Tensor& x) { return transpose(x); }, {4, 5});
  expect_primitive_passes("reshape", [&](const Tensor& x) { return reshape(x, {5, 4}); }, {4, 5});
  expect_primitive_passes("masked_fill", [&](const Tensor& x) { return masked_fill(x, mask, 3.0); }, {4, 5});
  expect_primitive_passes("slice_cols", [&](const Tensor& x) { return slice_cols(x, 1, 3); }, {4, 5});
  expect_primitive_passes("concat_cols", [&](const Tensor& x) { return concat_cols({x, w, x}); }, {4, 2});
  expect_primitive_passes("gather_cols", [&](const Tensor& x) { return gather_cols(x, gidx, 2); }, {4, 5});
  expect_primitive_passes("sum", [&](const Tensor& x) { return reshape(sum(x), {1}); }, {4, 5});
  expect_primitive_passes("smoothed_ce mean",
                          [&](const Tensor& x) { return reshape(smoothed_cross_entropy(x, targets, 0.1), {1}); },
                          {4, 5});
  expect_primitive_passes(
      "smoothed_ce sum",
      [&](const Tensor& x) { return reshape(smoothed_cross_entropy(x, targets, 0.2, Reduction::Sum), {1}); },
      {4, 5});
}

TEST(GradCheck, TwoLayerMlp) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    std::vector<Tensor> params{Tensor::randn({6, 4}, rng, 0.5), Tensor::randn({4}, rng, 0.5),
                               Tensor::randn({4, 3}, rng, 0.5), Tensor::randn({3}, rng, 0.5)};
    const auto x = Tensor::randn({5, 6}, rng, 1.0);
    const std::int32_t y[] = {0, 2, 1, 1, 0};
    const auto report = grad_check(
        [&] {
          const auto h = gelu(add(matmul(x, params[0]), params[1]));
          return smoothed_cross_entropy(add(matmul(h, params[2]), params[3]), y, 0.0);
        },
        params);
    EXPECT_LE(report.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Properties, SoftmaxRowsSumToOne) {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = Tensor::randn({7, 11}, rng, 5.0);
    const auto s = softmax_rows(x);
    for (std::size_t r = 0; r < 7; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 11; ++c) total += s.at(r, c);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Properties, LayerNormMomentsWithUnitGain) {
  Rng rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = Tensor::randn({6, 16}, rng, 3.0);
    const auto y = layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 1e-12);
    for (std::size_t r = 0; r < 6; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < 16; ++c) mean += y.at(r, c);
      mean /= 16.0;
      for (std::size_t c = 0; c < 16; ++c) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      var /= 16.0;
      EXPECT_LE(std::abs(mean), 1e-10);
      EXPECT_NEAR(var, 1.0, 1e-8);
    }
  }
}

TEST(Properties, DropoutRateZeroIsIdentity) {
  Rng rng(23);
  const auto x = Tensor::randn({3, 3}, rng, 1.0);
  Rng r(1);
  const auto y = dropout(x, 0.0, r);
  EXPECT_TRUE(std::equal(x.values().begin(), x.values().end(), y.values().begin()));
  const auto z = dropout(x, 0.5, r, false);
  EXPECT_TRUE(std::equal(x.values().begin(), x.values().end(), z.values().begin()));
  EXPECT_EQ(code_of([&] { dropout(x, 1.0, r); }), ErrorCode::InvalidConfig);
}

TEST(Properties, DropoutPreservesExpectation) {
  for (double rate : {0.1, 0.5}) {
    Rng r(24);
    const auto y = dropout(Tensor::full({100000}, 1.0), rate, r);
    double mean = 0.0;
    for (double v : y.values()) mean += v;
    mean /= 1e5;
    EXPECT_NEAR(mean, 1.0, 0.01) << "rate " << rate;
  }
}

TEST(SmoothedCrossEntropy, IgnoredRowsAndErrors) {
  const Tensor logits({2, 3}, {1, 2, 3, 3, 2, 1});
  const std::int32_t one[] = {2, -1};
  const std::int32_t only[] = {2};
  const Tensor first({1, 3}, {1, 2, 3});
  EXPECT_DOUBLE_EQ(smoothed_cross_entropy(logits, one, 0.1).item(),
                   smoothed_cross_entropy(first, only, 0.1).item());
  const std::int32_t none[] = {-1, -1};
  EXPECT_EQ(code_of([&] { smoothed_cross_entropy(logits, none, 0.1); }), ErrorCode::AllIgnored);
  const std::int32_t out_of_range[] = {3, 0};
  EXPECT_EQ(code_of([&] { smoothed_cross_entropy(logits, out_of_range, 0.1); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { smoothed_cross_entropy(logits, one, 1.0); }), ErrorCode::InvalidConfig);
}

TEST(Rng, DeterministicAndDerived) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(derive_seed(5, {1}), derive_seed(5, {2}));
  EXPECT_NE(derive_seed(5, {1, 2}), derive_seed(5, {2, 1}));
  EXPECT_EQ(derive_seed(5, {1, 2}), derive_seed(5, {1, 2}));
  Rng c(6);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(c.below(7), 7u);
  }
}

}  // namespace
}  // namespace peftner::ad
