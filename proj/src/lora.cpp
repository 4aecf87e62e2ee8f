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

#include "peftner/lora.hpp"

#include <Eigen/Core>
#include <unordered_set>

#include "peftner/binary_io.hpp"
#include "peftner/error.hpp"

namespace peftner::lora {

namespace {

constexpr std::string_view kAdapterMagic = "PNERLRA\x01";
constexpr std::uint32_t kFormatVersion = 1;
constexpr double kInitStd = 0.02;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

ConstMap as_matrix(const ad::Tensor& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.dim(0)),
                  static_cast<Eigen::Index>(t.dim(1)));
}

encoder::Encoder with_fresh_storage(const encoder::Encoder& model) {
  encoder::Encoder copy = model;
  for (auto& p : copy.base_parameters()) *p.tensor = p.tensor->detach(false);
  return copy;
}

}  // namespace

std::string_view to_string(Target target) {
  switch (target) {
    case Target::Query: return "query";
    case Target::Key: return "key";
    case Target::Value: return "value";
    case Target::Output: return "output";
  }
  return "?";
}

Target parse_target(std::string_view name) {
  if (name == "query") return Target::Query;
  if (name == "key") return Target::Key;
  if (name == "value") return Target::Value;
  if (name == "output") return Target::Output;
  throw Error(ErrorCode::UnknownTarget, "unknown LoRA target '" + std::string(name) + "'");
}

std::vector<Target> parse_targets(std::string_view list) {
  std::vector<Target> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    std::size_t comma = list.find(',', pos);
    if (comma == std::string_view::npos) comma = list.size();
    auto item = list.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(parse_target(item));
    pos = comma + 1;
  }
  return out;
}

std::string format_targets(const std::vector<Target>& targets) {
  std::string out;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (i) out += ',';
    out += to_string(targets[i]);
  }
  return out;
}

void LoraConfig::validate() const {
  if (rank < 1) throw Error(ErrorCode::InvalidConfig, "LoRA rank must be at least 1");
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "LoRA alpha must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidConfig, "LoRA dropout must be in [0, 1)");
  if (targets.empty()) throw Error(ErrorCode::InvalidConfig, "LoRA needs at least one target");
  std::unordered_set<std::uint32_t> seen;
  for (Target t : targets) {
    if (!seen.insert(static_cast<std::uint32_t>(t)).second) {
      throw Error(ErrorCode::InvalidConfig, "duplicate LoRA target " + std::string(to_string(t)));
    }
  }
}

encoder::Linear& projection(encoder::EncoderLayer& layer, Target target) {
  switch (target) {
    case Target::Query: return layer.query;
    case Target::Key: return layer.key;
    case Target::Value: return layer.value;
    case Target::Output: return layer.output;
  }
  throw Error(ErrorCode::UnknownTarget, "unknown LoRA target");
}

const encoder::Linear& projection(const encoder::EncoderLayer& layer, Target target) {
  return projection(const_cast<encoder::EncoderLayer&>(layer), target);
}

void inject(encoder::Encoder& model, const LoraConfig& config, Rng& rng) {
  config.validate();
  model.set_trainable(false);
  for (auto& layer : model.layers()) {
    for (Target t : config.targets) {
      auto& host = projection(layer, t);
      if (!host.weight.defined()) {
        throw Error(ErrorCode::UnknownTarget, "model has no " + std::string(to_string(t)) + " projection");
      }
      if (host.delta) {
        throw Error(ErrorCode::InvalidConfig, std::string(to_string(t)) + " projection already adapted");
      }
      encoder::LowRankDelta delta;
      delta.a = ad::Tensor::randn({config.rank, host.in_features()}, rng, kInitStd, true);
      delta.b = ad::Tensor::zeros({host.out_features(), config.rank}, true);
      delta.scale = config.scale();
      delta.dropout = config.dropout;
      host.delta = std::move(delta);
    }
  }
}

ad::Tensor effective_weight(const ad::Tensor& weight, const ad::Tensor& a, const ad::Tensor& b,
                            double alpha, std::size_t rank) {
  if (weight.rank() != 2 || a.rank() != 2 || b.rank() != 2 || a.dim(0) != rank || b.dim(1) != rank ||
      b.dim(0) != weight.dim(0) || a.dim(1) != weight.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "W " + ad::shape_string(weight.shape()) + ", A " +
                                              ad::shape_string(a.shape()) + ", B " +
                                              ad::shape_string(b.shape()) + " with rank " +
                                              std::to_string(rank));
  }
  RowMat merged = as_matrix(weight) + (alpha / static_cast<double>(rank)) * (as_matrix(b) * as_matrix(a));
  return ad::Tensor(weight.shape(), std::vector<double>(merged.data(), merged.data() + merged.size()));
}

encoder::Encoder merge(const encoder::Encoder& model) {
  encoder::Encoder merged = with_fresh_storage(model);
  for (auto& layer : merged.layers()) {
    for (Target t : {Target::Query, Target::Key, Target::Value, Target::Output}) {
      auto& host = projection(layer, t);
      if (!host.delta) continue;
      const auto& d = *host.delta;
      RowMat folded = as_matrix(host.weight) + d.scale * (as_matrix(d.b) * as_matrix(d.a));
      host.weight = ad::Tensor(host.weight.shape(),
                               std::vector<double>(folded.data(), folded.data() + folded.size()));
      host.delta.reset();
    }
  }
  return merged;
}

ParameterBudget budget_from_counts(std::size_t trainable, std::size_t frozen) {
  ParameterBudget b{trainable, frozen, 0.0};
  const std::size_t total = trainable + frozen;
  b.percent = total == 0 ? 0.0 : 100.0 * static_cast<double>(trainable) / static_cast<double>(total);
  return b;
}

ParameterBudget trainable_fraction(const encoder::Encoder& model, const encoder::ClassifierHead* head) {
  std::size_t trainable = 0, frozen = 0;
  std::unordered_set<const void*> seen;
  auto count = [&](const ad::Tensor& t) {
    if (!t.defined() || !seen.insert(t.node()).second) return;
    (t.requires_grad() ? trainable : frozen) += t.numel();
  };
  for (const auto& [name, t] : model.base_parameters()) count(*t);
  for (const auto& layer : model.layers()) {
    for (Target t : {Target::Query, Target::Key, Target::Value, Target::Output}) {
      const auto& host = projection(layer, t);
      if (host.delta) {
        count(host.delta->a);
        count(host.delta->b);
      }
    }
  }
  if (head) {
    count(head->weight);
    count(head->bias);
  }
  return budget_from_counts(trainable, frozen);
}

std::string AdapterState::serialize() const {
  io::Writer w;
  w.bytes(kAdapterMagic);
  w.u32(kFormatVersion);
  w.u64(config.rank);
  w.f64(config.alpha);
  w.f64(config.dropout);
  w.u32(static_cast<std::uint32_t>(config.targets.size()));
  for (Target t : config.targets) w.u32(static_cast<std::uint32_t>(t));
  w.u64(base_fingerprint);
  w.u32(static_cast<std::uint32_t>(factors.size()));
  for (const auto& f : factors) {
    w.u32(f.layer);
    w.u32(static_cast<std::uint32_t>(f.target));
    w.u64(f.a.dim(1));
    w.u64(f.b.dim(0));
    w.doubles(f.a.values());
    w.doubles(f.b.values());
  }
  return w.buffer();
}

AdapterState AdapterState::deserialize(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kAdapterMagic.size()) != kAdapterMagic) throw Error(ErrorCode::BadCheckpoint, "not an adapter checkpoint");
  if (r.u32() != kFormatVersion) throw Error(ErrorCode::BadCheckpoint, "unsupported adapter version");
  AdapterState s;
  s.config.rank = r.u64();
  s.config.alpha = r.f64();
  s.config.dropout = r.f64();
  const std::uint32_t n_targets = r.u32();
  s.config.targets.clear();
  for (std::uint32_t i = 0; i < n_targets; ++i) {
    const std::uint32_t t = r.u32();
    if (t > 3) throw Error(ErrorCode::BadCheckpoint, "unknown adapter target");
    s.config.targets.push_back(static_cast<Target>(t));
  }
  s.config.validate();
  s.base_fingerprint = r.u64();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Factors f;
    f.layer = r.u32();
    const std::uint32_t t = r.u32();
    if (t > 3) throw Error(ErrorCode::BadCheckpoint, "unknown adapter target");
    f.target = static_cast<Target>(t);
    const std::size_t d_in = r.u64();
    const std::size_t d_out = r.u64();
    if (d_in == 0 || d_out == 0 || d_in > (1u << 24) || d_out > (1u << 24)) {
      throw Error(ErrorCode::BadCheckpoint, "bad adapter shape");
    }
    f.a = ad::Tensor::zeros({s.config.rank, d_in});
    f.b = ad::Tensor::zeros({d_out, s.config.rank});
    r.doubles(f.a.mutable_values());
    r.doubles(f.b.mutable_values());
    s.factors.push_back(std::move(f));
  }
  if (!r.at_end()) throw Error(ErrorCode::BadCheckpoint, "trailing bytes in adapter checkpoint");
  return s;
}

AdapterState extract(const encoder::Encoder& model, const LoraConfig& config) {
  AdapterState s;
  s.config = config;
  s.base_fingerprint = model.fingerprint();
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    for (Target t : config.targets) {
      const auto& host = projection(model.layers()[l], t);
      if (!host.delta) throw Error(ErrorCode::UnknownTarget, "layer " + std::to_string(l) + " has no adapter");
      s.factors.push_back({static_cast<std::uint32_t>(l), t, host.delta->a.detach(), host.delta->b.detach()});
    }
  }
  return s;
}

void attach(encoder::Encoder& model, const AdapterState& state) {
  if (model.fingerprint() != state.base_fingerprint) {
    throw Error(ErrorCode::FingerprintMismatch, "adapter was trained against a different base model");
  }
  model.set_trainable(false);
  for (const auto& f : state.factors) {
    if (f.layer >= model.layers().size()) throw Error(ErrorCode::BadCheckpoint, "adapter layer out of range");
    auto& host = projection(model.layers()[f.layer], f.target);
    if (f.a.dim(1) != host.in_features() || f.b.dim(0) != host.out_features()) {
      throw Error(ErrorCode::ShapeMismatch, "adapter factors do not fit the host projection");
    }
    encoder::LowRankDelta delta;
    delta.a = f.a.detach(true);
    delta.b = f.b.detach(true);
    delta.scale = state.config.scale();
    delta.dropout = state.config.dropout;
    host.delta = std::move(delta);
  }
}

void save_adapter(const std::string& path, const AdapterState& state) {
  io::write_file(path, state.serialize());
}

AdapterState load_adapter(const std::string& path) { return AdapterState::deserialize(io::read_file(path)); }

}  // namespace peftner::lora
