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

#include "peftner/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "peftner/binary_io.hpp"
#include "peftner/error.hpp"

namespace peftner::encoder {

namespace {

constexpr std::string_view kBackboneMagic = "PNERBKB\x01";
constexpr std::string_view kHeadMagic = "PNERHED\x01";
constexpr std::uint32_t kFormatVersion = 1;

Linear make_linear(std::size_t d_out, std::size_t d_in, bool with_bias, Rng& rng, double std) {
  Linear l;
  l.weight = ad::Tensor::randn({d_out, d_in}, rng, std);
  if (with_bias) l.bias = ad::Tensor::zeros({d_out});
  return l;
}

LayerNormParams make_norm(std::size_t d) {
  return {ad::Tensor::full({d}, 1.0), ad::Tensor::zeros({d})};
}

ad::Tensor apply_norm(const ad::Tensor& x, const LayerNormParams& p, double eps) {
  return ad::layer_norm(x, p.gain, p.bias, eps);
}

void write_config(io::Writer& w, const EncoderConfig& c) {
  w.u64(c.vocab_size);
  w.u64(c.d_model);
  w.u64(c.n_layers);
  w.u64(c.n_heads);
  w.u64(c.d_ff);
  w.u64(c.max_positions);
  w.u64(c.relative_buckets);
  w.u32(static_cast<std::uint32_t>(c.attention_mode));
  w.f64(c.dropout);
  w.f64(c.init_std);
  w.f64(c.layer_norm_eps);
}

EncoderConfig read_config(io::Reader& r) {
  EncoderConfig c;
  c.vocab_size = r.u64();
  c.d_model = r.u64();
  c.n_layers = r.u64();
  c.n_heads = r.u64();
  c.d_ff = r.u64();
  c.max_positions = r.u64();
  c.relative_buckets = r.u64();
  const auto mode = r.u32();
  if (mode > 1) throw Error(ErrorCode::BadCheckpoint, "unknown attention mode");
  c.attention_mode = static_cast<AttentionMode>(mode);
  c.dropout = r.f64();
  c.init_std = r.f64();
  c.layer_norm_eps = r.f64();
  c.validate();
  return c;
}

}  // namespace

std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::Standard ? "standard" : "disentangled";
}

AttentionMode parse_attention_mode(std::string_view text) {
  if (text == "standard") return AttentionMode::Standard;
  if (text == "disentangled") return AttentionMode::Disentangled;
  throw Error(ErrorCode::InvalidConfig, "unknown attention mode '" + std::string(text) + "'");
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (vocab_size < 6) fail("vocab_size must exceed the reserved pieces");
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0) fail("encoder dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (max_positions < 256) fail("max_positions must be at least 256");
  if (relative_buckets == 0) fail("relative_buckets must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(init_std > 0.0)) fail("init_std must be positive");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
}

std::size_t relative_bucket(std::ptrdiff_t rel, std::size_t k, std::size_t max_positions) {
  const auto kk = static_cast<std::ptrdiff_t>(k);
  const std::ptrdiff_t mid = std::max<std::ptrdiff_t>(1, kk / 2);
  const std::ptrdiff_t magnitude = rel < 0 ? -rel : rel;
  std::ptrdiff_t bucket = magnitude;
  if (magnitude > mid) {
    const double span = std::log(std::max(2.0, static_cast<double>(max_positions - 1) / mid));
    const double scaled = std::ceil(std::log(static_cast<double>(magnitude) / mid) / span *
                                    static_cast<double>(kk - mid));
    bucket = std::min(kk, mid + static_cast<std::ptrdiff_t>(scaled));
  }
  bucket = std::min(bucket, kk);
  return static_cast<std::size_t>((rel < 0 ? -bucket : bucket) + kk);
}

Rng& ForwardContext::require_rng() const {
  if (rng == nullptr) throw Error(ErrorCode::InvalidConfig, "training forward pass needs an rng");
  return *rng;
}

ad::Tensor Linear::forward(const ad::Tensor& x, ForwardContext& ctx) const {
  ad::Tensor y = ad::matmul_transposed(x, weight);
  if (bias.defined()) y = ad::add(y, bias);
  if (delta) {
    ad::Tensor xin = x;
    if (ctx.training && delta->dropout > 0.0) xin = ad::dropout(x, delta->dropout, ctx.require_rng());
    ad::Tensor low = ad::matmul_transposed(ad::matmul_transposed(xin, delta->a), delta->b);
    y = ad::add(y, ad::scale(low, delta->scale));
  }
  return y;
}

Encoder Encoder::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const double std = config.init_std;
  const std::size_t d = config.d_model;
  Encoder e;
  e.config_ = config;
  e.token_embedding_ = ad::Tensor::randn({config.vocab_size, d}, rng, std);
  if (config.attention_mode == AttentionMode::Standard) {
    e.position_embedding_ = ad::Tensor::randn({config.max_positions, d}, rng, std);
  } else {
    e.relative_embedding_ = ad::Tensor::randn({2 * config.relative_buckets + 1, d}, rng, std);
  }
  e.embedding_norm_ = make_norm(d);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayer layer;
    layer.query = make_linear(d, d, true, rng, std);
    layer.key = make_linear(d, d, true, rng, std);
    layer.value = make_linear(d, d, true, rng, std);
    layer.output = make_linear(d, d, true, rng, std);
    if (config.attention_mode == AttentionMode::Disentangled) {
      layer.pos_query = make_linear(d, d, false, rng, std);
      layer.pos_key = make_linear(d, d, false, rng, std);
    }
    layer.attention_norm = make_norm(d);
    layer.ff_in = make_linear(config.d_ff, d, true, rng, std);
    layer.ff_out = make_linear(d, config.d_ff, true, rng, std);
    layer.ff_norm = make_norm(d);
    e.layers_.push_back(std::move(layer));
  }
  return e;
}

ad::Tensor Encoder::encode(std::span<const PieceId> ids, ForwardContext& ctx) const {
  const std::size_t n = ids.size();
  if (n > config_.max_positions) {
    throw Error(ErrorCode::SequenceTooLong, "sequence of " + std::to_string(n) +
                                                " pieces exceeds max_positions " +
                                                std::to_string(config_.max_positions));
  }
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "cannot encode an empty sequence");
  const bool disentangled = config_.attention_mode == AttentionMode::Disentangled;
  const double p = config_.dropout;
  const double eps = config_.layer_norm_eps;
  auto drop = [&](const ad::Tensor& t) {
    return ctx.training && p > 0.0 ? ad::dropout(t, p, ctx.require_rng()) : t;
  };

  ad::Tensor x = ad::embedding_lookup(token_embedding_, ids);
  if (!disentangled && !ctx.disable_positions) {
    std::vector<PieceId> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<PieceId>(i);
    x = ad::add(x, ad::embedding_lookup(position_embedding_, positions));
  }
  x = drop(apply_norm(x, embedding_norm_, eps));

  const std::size_t heads = config_.n_heads;
  const std::size_t dh = config_.d_head();
  std::vector<std::size_t> bucket_index;
  if (disentangled) {
    bucket_index.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        bucket_index[i * n + j] =
            relative_bucket(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(j),
                            config_.relative_buckets, config_.max_positions);
      }
    }
  }
  const double scale = 1.0 / std::sqrt((disentangled ? 3.0 : 1.0) * static_cast<double>(dh));

  for (const auto& layer : layers_) {
    const ad::Tensor q = layer.query.forward(x, ctx);
    const ad::Tensor k = layer.key.forward(x, ctx);
    const ad::Tensor v = layer.value.forward(x, ctx);
    ad::Tensor pos_q, pos_k;
    if (disentangled) {
      pos_q = layer.pos_query.forward(relative_embedding_, ctx);
      pos_k = layer.pos_key.forward(relative_embedding_, ctx);
    }
    std::vector<ad::Tensor> contexts;
    contexts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const ad::Tensor qh = ad::slice_cols(q, h * dh, dh);
      const ad::Tensor kh = ad::slice_cols(k, h * dh, dh);
      const ad::Tensor vh = ad::slice_cols(v, h * dh, dh);
      ad::Tensor scores = ad::matmul_transposed(qh, kh);
      if (disentangled) {
        const ad::Tensor content_to_pos = ad::gather_cols(
            ad::matmul_transposed(qh, ad::slice_cols(pos_k, h * dh, dh)), bucket_index, n);
        const ad::Tensor pos_to_content = ad::transpose(ad::gather_cols(
            ad::matmul_transposed(kh, ad::slice_cols(pos_q, h * dh, dh)), bucket_index, n));
        scores = ad::add(ad::add(scores, content_to_pos), pos_to_content);
      }
      scores = ad::scale(scores, scale);
      ad::Tensor probs = ad::softmax_rows(scores);
      if (ctx.trace) {
        ctx.trace->logits.push_back(scores);
        ctx.trace->probs.push_back(probs);
      }
      contexts.push_back(ad::matmul(drop(probs), vh));
    }
    const ad::Tensor attended = drop(layer.output.forward(ad::concat_cols(contexts), ctx));
    x = apply_norm(ad::add(x, attended), layer.attention_norm, eps);
    const ad::Tensor ff = drop(layer.ff_out.forward(ad::gelu(layer.ff_in.forward(x, ctx)), ctx));
    x = apply_norm(ad::add(x, ff), layer.ff_norm, eps);
  }
  return x;
}

std::vector<NamedTensor> Encoder::base_parameters() {
  std::vector<NamedTensor> out;
  out.push_back({"embeddings.token", &token_embedding_});
  if (position_embedding_.defined()) out.push_back({"embeddings.position", &position_embedding_});
  if (relative_embedding_.defined()) out.push_back({"embeddings.relative", &relative_embedding_});
  out.push_back({"embeddings.norm.gain", &embedding_norm_.gain});
  out.push_back({"embeddings.norm.bias", &embedding_norm_.bias});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    auto add_linear = [&](const std::string& name, Linear& lin) {
      if (!lin.weight.defined()) return;
      out.push_back({prefix + name + ".weight", &lin.weight});
      if (lin.bias.defined()) out.push_back({prefix + name + ".bias", &lin.bias});
    };
    add_linear("attention.query", layer.query);
    add_linear("attention.key", layer.key);
    add_linear("attention.value", layer.value);
    add_linear("attention.output", layer.output);
    add_linear("attention.pos_query", layer.pos_query);
    add_linear("attention.pos_key", layer.pos_key);
    out.push_back({prefix + "attention.norm.gain", &layer.attention_norm.gain});
    out.push_back({prefix + "attention.norm.bias", &layer.attention_norm.bias});
    add_linear("ff.in", layer.ff_in);
    add_linear("ff.out", layer.ff_out);
    out.push_back({prefix + "ff.norm.gain", &layer.ff_norm.gain});
    out.push_back({prefix + "ff.norm.bias", &layer.ff_norm.bias});
  }
  return out;
}

std::vector<std::pair<std::string, const ad::Tensor*>> Encoder::base_parameters() const {
  std::vector<std::pair<std::string, const ad::Tensor*>> out;
  for (auto& [name, t] : const_cast<Encoder*>(this)->base_parameters()) out.emplace_back(name, t);
  return out;
}

void Encoder::set_trainable(bool trainable) {
  for (auto& p : base_parameters()) p.tensor->set_requires_grad(trainable);
}

std::uint64_t Encoder::fingerprint() const {
  io::Writer w;
  write_config(w, config_);
  io::Fnv1a h;
  h.update(w.buffer());
  for (const auto& [name, t] : base_parameters()) {
    h.update(name);
    h.update_doubles(t->values());
  }
  return h.digest();
}

std::string Encoder::serialize() const {
  io::Writer w;
  w.bytes(kBackboneMagic);
  w.u32(kFormatVersion);
  write_config(w, config_);
  for (const auto& [name, t] : base_parameters()) w.doubles(t->values());
  return w.buffer();
}

Encoder Encoder::deserialize(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kBackboneMagic.size()) != kBackboneMagic) {
    throw Error(ErrorCode::BadCheckpoint, "not a backbone checkpoint");
  }
  if (r.u32() != kFormatVersion) throw Error(ErrorCode::BadCheckpoint, "unsupported backbone version");
  const EncoderConfig config = read_config(r);
  // Shapes come from a seeded init; every value is then overwritten.
  Encoder e = Encoder::init(config, 0);
  for (auto& p : e.base_parameters()) r.doubles(p.tensor->mutable_values());
  if (!r.at_end()) throw Error(ErrorCode::BadCheckpoint, "trailing bytes in backbone checkpoint");
  return e;
}

MlmHead MlmHead::tied_to(Encoder& encoder) {
  return {encoder.token_embedding(), ad::Tensor::zeros({encoder.config().vocab_size})};
}

ad::Tensor mlm_logits(const ad::Tensor& hidden, const MlmHead& head) {
  if (hidden.rank() != 2 || hidden.dim(1) != head.projection.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "hidden " + ad::shape_string(hidden.shape()) +
                                              " vs projection " + ad::shape_string(head.projection.shape()));
  }
  return ad::add(ad::matmul_transposed(hidden, head.projection), head.bias);
}

ClassifierHead ClassifierHead::init(std::size_t d_model, std::vector<std::string> labels, Rng& rng,
                                    double init_std) {
  ClassifierHead head;
  head.weight = ad::Tensor::randn({labels.size(), d_model}, rng, init_std);
  head.bias = ad::Tensor::zeros({labels.size()});
  head.labels = std::move(labels);
  return head;
}

std::string ClassifierHead::serialize() const {
  io::Writer w;
  w.bytes(kHeadMagic);
  w.u32(kFormatVersion);
  w.u64(weight.dim(1));
  w.u64(labels.size());
  for (const auto& l : labels) w.str(l);
  w.doubles(weight.values());
  w.doubles(bias.values());
  return w.buffer();
}

ClassifierHead ClassifierHead::deserialize(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(kHeadMagic.size()) != kHeadMagic) throw Error(ErrorCode::BadCheckpoint, "not a head checkpoint");
  if (r.u32() != kFormatVersion) throw Error(ErrorCode::BadCheckpoint, "unsupported head version");
  ClassifierHead head;
  const std::size_t d = r.u64();
  const std::size_t k = r.u64();
  if (d == 0 || k == 0 || k > (1u << 20) || d > (1u << 20)) throw Error(ErrorCode::BadCheckpoint, "bad head shape");
  for (std::size_t i = 0; i < k; ++i) head.labels.push_back(r.str());
  head.weight = ad::Tensor::zeros({k, d});
  head.bias = ad::Tensor::zeros({k});
  r.doubles(head.weight.mutable_values());
  r.doubles(head.bias.mutable_values());
  if (!r.at_end()) throw Error(ErrorCode::BadCheckpoint, "trailing bytes in head checkpoint");
  return head;
}

ad::Tensor classifier_logits(const ad::Tensor& hidden, const ClassifierHead& head) {
  if (hidden.rank() != 2 || hidden.dim(1) != head.weight.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "hidden " + ad::shape_string(hidden.shape()) +
                                              " vs classifier " + ad::shape_string(head.weight.shape()));
  }
  return ad::add(ad::matmul_transposed(hidden, head.weight), head.bias);
}

ad::Tensor classify_tokens(const ad::Tensor& hidden, const ClassifierHead& head) {
  return ad::softmax_rows(classifier_logits(hidden, head));
}

}  // namespace peftner::encoder
