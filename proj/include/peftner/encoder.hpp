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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "peftner/autodiff.hpp"
#include "peftner/rng.hpp"

namespace peftner::encoder {

using PieceId = std::int32_t;

enum class AttentionMode : std::uint32_t { Standard = 0, Disentangled = 1 };

std::string_view to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view text);

struct EncoderConfig {
  std::size_t vocab_size = 8000;
  std::size_t d_model = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  /// 256-piece windows plus [CLS] and [SEP].
  std::size_t max_positions = 258;
  /// k: relative distances fall into 2k + 1 buckets.
  std::size_t relative_buckets = 32;
  AttentionMode attention_mode = AttentionMode::Standard;
  double dropout = 0.1;
  double init_std = 0.02;
  double layer_norm_eps = 1e-12;

  std::size_t d_head() const { return d_model / n_heads; }
  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Log-symmetric bucket in [0, 2k] for relative distance `rel` (query minus key).
std::size_t relative_bucket(std::ptrdiff_t rel, std::size_t k, std::size_t max_positions);

/// Trainable low-rank update attached to a projection: y += scale * (drop(x) A^T) B^T.
struct LowRankDelta {
  ad::Tensor a;  // r x d_in
  ad::Tensor b;  // d_out x r
  double scale = 1.0;
  double dropout = 0.0;
};

struct ForwardContext;

/// y = x W^T + b, plus the low-rank delta when one is attached.
struct Linear {
  ad::Tensor weight;  // d_out x d_in
  ad::Tensor bias;    // d_out, undefined for bias-free projections
  std::optional<LowRankDelta> delta;

  ad::Tensor forward(const ad::Tensor& x, ForwardContext& ctx) const;
  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
};

struct LayerNormParams {
  ad::Tensor gain;
  ad::Tensor bias;
};

struct EncoderLayer {
  Linear query, key, value, output;
  Linear pos_query, pos_key;  // disentangled mode only, bias-free
  LayerNormParams attention_norm;
  Linear ff_in, ff_out;
  LayerNormParams ff_norm;
};

/// Optional capture of attention internals for inspection and tests.
struct AttentionTrace {
  std::vector<ad::Tensor> logits;  // per layer, per head: n x n (pre-softmax)
  std::vector<ad::Tensor> probs;
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;
  /// Standard mode only: skip absolute positions (used for equivariance checks).
  bool disable_positions = false;

  Rng& require_rng() const;
};

struct NamedTensor {
  std::string name;
  ad::Tensor* tensor;
};

class Encoder {
 public:
  Encoder() = default;
  /// Gaussian(0, init_std) weights, zero biases, unit layer-norm gains.
  static Encoder init(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  /// Hidden states (n x d_model). Throws SequenceTooLong.
  ad::Tensor encode(std::span<const PieceId> ids, ForwardContext& ctx) const;

  ad::Tensor& token_embedding() { return token_embedding_; }
  const ad::Tensor& token_embedding() const { return token_embedding_; }
  std::vector<EncoderLayer>& layers() { return layers_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }

  /// Base parameters in declared (serialization) order. Low-rank deltas are
  /// not included.
  std::vector<NamedTensor> base_parameters();
  std::vector<std::pair<std::string, const ad::Tensor*>> base_parameters() const;

  void set_trainable(bool trainable);

  /// 64-bit hash over the config and every base parameter's bytes.
  std::uint64_t fingerprint() const;

  /// Checkpoint: magic, version, config, then raw little-endian parameter
  /// blocks in declared order.
  std::string serialize() const;
  static Encoder deserialize(std::string_view bytes);

 private:
  EncoderConfig config_;
  ad::Tensor token_embedding_;     // vocab x d
  ad::Tensor position_embedding_;  // max_positions x d (standard)
  ad::Tensor relative_embedding_;  // (2k + 1) x d (disentangled)
  LayerNormParams embedding_norm_;
  std::vector<EncoderLayer> layers_;
};

/// Output projection tied to the token embedding, plus a per-piece bias.
struct MlmHead {
  ad::Tensor projection;  // same storage as Encoder::token_embedding()
  ad::Tensor bias;        // vocab

  static MlmHead tied_to(Encoder& encoder);
};

/// Vocabulary-sized logits per row; softmax is left to the loss.
ad::Tensor mlm_logits(const ad::Tensor& hidden, const MlmHead& head);

/// Single linear layer over hidden states: softmax(W h + b) per piece.
struct ClassifierHead {
  ad::Tensor weight;  // |L| x d_model
  ad::Tensor bias;    // |L|
  std::vector<std::string> labels;

  static ClassifierHead init(std::size_t d_model, std::vector<std::string> labels, Rng& rng,
                             double init_std = 0.02);
  std::size_t num_labels() const { return labels.size(); }

  std::string serialize() const;
  static ClassifierHead deserialize(std::string_view bytes);
};

ad::Tensor classifier_logits(const ad::Tensor& hidden, const ClassifierHead& head);
/// Probability rows over the label inventory. Throws ShapeMismatch.
ad::Tensor classify_tokens(const ad::Tensor& hidden, const ClassifierHead& head);

}  // namespace peftner::encoder
