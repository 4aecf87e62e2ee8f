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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "peftner/autodiff.hpp"
#include "peftner/encoder.hpp"
#include "peftner/rng.hpp"

namespace peftner::lora {

enum class Target : std::uint32_t { Query = 0, Key = 1, Value = 2, Output = 3 };

std::string_view to_string(Target target);
/// Throws UnknownTarget.
Target parse_target(std::string_view name);
/// Comma-separated list, e.g. "query,value".
std::vector<Target> parse_targets(std::string_view list);
std::string format_targets(const std::vector<Target>& targets);

struct LoraConfig {
  std::size_t rank = 16;
  double alpha = 32.0;
  double dropout = 0.05;
  std::vector<Target> targets{Target::Query, Target::Value};

  double scale() const { return alpha / static_cast<double>(rank); }
  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const LoraConfig&) const = default;
};

/// The host projection of `target` in `layer`.
encoder::Linear& projection(encoder::EncoderLayer& layer, Target target);
const encoder::Linear& projection(const encoder::EncoderLayer& layer, Target target);

/// Freezes every base parameter and attaches fresh factors to each target
/// projection of every layer: A ~ N(0, 0.02^2), B = 0.
void inject(encoder::Encoder& model, const LoraConfig& config, Rng& rng);

/// W + (alpha / r) B A, from plain values. Throws ShapeMismatch.
ad::Tensor effective_weight(const ad::Tensor& weight, const ad::Tensor& a, const ad::Tensor& b,
                            double alpha, std::size_t rank);

/// Copy of `model` with every delta folded into its host weight. The result
/// owns fresh storage and carries no adapter structure.
encoder::Encoder merge(const encoder::Encoder& model);

struct ParameterBudget {
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  double percent = 0.0;
};

ParameterBudget budget_from_counts(std::size_t trainable, std::size_t frozen);
/// Counts requires_grad tensors as trainable. Tied storage is counted once.
ParameterBudget trainable_fraction(const encoder::Encoder& model,
                                   const encoder::ClassifierHead* head = nullptr);

/// Adapter factors detached from a model, plus the fingerprint of the base
/// they were trained against.
struct AdapterState {
  struct Factors {
    std::uint32_t layer = 0;
    Target target = Target::Query;
    ad::Tensor a;
    ad::Tensor b;
  };

  LoraConfig config;
  std::uint64_t base_fingerprint = 0;
  std::vector<Factors> factors;

  /// Header (magic, version, config, fingerprint) then per-layer A/B blocks.
  std::string serialize() const;
  static AdapterState deserialize(std::string_view bytes);
};

/// Snapshot of the adapters currently attached to `model` (values copied).
AdapterState extract(const encoder::Encoder& model, const LoraConfig& config);
/// Attaches copies of the stored factors. Throws FingerprintMismatch when
/// `model` is not the base the adapter was trained on.
void attach(encoder::Encoder& model, const AdapterState& state);

void save_adapter(const std::string& path, const AdapterState& state);
AdapterState load_adapter(const std::string& path);

}  // namespace peftner::lora
