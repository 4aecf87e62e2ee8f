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

#include "peftner/config.hpp"

#include <charconv>
#include <filesystem>
#include <functional>

#include "peftner/binary_io.hpp"
#include "peftner/error.hpp"

namespace peftner::config {

namespace {

namespace fs = std::filesystem;

constexpr PathRole kAllRoles[] = {PathRole::TrainData, PathRole::DevData,     PathRole::TestData,
                                  PathRole::Unlabeled, PathRole::Input,       PathRole::Backbone,
                                  PathRole::Vocab,     PathRole::Adapter,     PathRole::Head,
                                  PathRole::Predictions, PathRole::PredictionsB};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorCode::InvalidConfig, key + ": expected " + expected + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) bad_value(key, value, "a number");
  return out;
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Synth: return "synth";
    case Stage::Dapt: return "dapt";
    case Stage::Finetune: return "finetune";
    case Stage::Hpo: return "hpo";
    case Stage::Evaluate: return "evaluate";
    case Stage::Predict: return "predict";
    case Stage::Carbon: return "carbon";
  }
  return "?";
}

std::string_view to_string(PathRole role) {
  switch (role) {
    case PathRole::TrainData: return "train";
    case PathRole::DevData: return "dev";
    case PathRole::TestData: return "test";
    case PathRole::Unlabeled: return "unlabeled";
    case PathRole::Input: return "input";
    case PathRole::Backbone: return "backbone";
    case PathRole::Vocab: return "vocab";
    case PathRole::Adapter: return "adapter";
    case PathRole::Head: return "head";
    case PathRole::Predictions: return "predictions";
    case PathRole::PredictionsB: return "predictions_b";
  }
  return "?";
}

std::string path_key(PathRole role) { return "paths." + std::string(to_string(role)); }

bool may_read(Stage stage, PathRole role) {
  using R = PathRole;
  switch (stage) {
    case Stage::Synth:
    case Stage::Carbon:
      return false;
    case Stage::Dapt:
      return role == R::TrainData || role == R::DevData || role == R::Unlabeled;
    case Stage::Finetune:
    case Stage::Hpo:
      return role == R::TrainData || role == R::DevData || role == R::Backbone || role == R::Vocab;
    case Stage::Evaluate:
      return role == R::TestData || role == R::Backbone || role == R::Vocab || role == R::Adapter ||
             role == R::Head || role == R::Predictions || role == R::PredictionsB;
    case Stage::Predict:
      return role == R::Input || role == R::Backbone || role == R::Vocab || role == R::Adapter || role == R::Head;
  }
  return false;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& base_dir) {
  RunConfig cfg;
  bool have_seed = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw LineError(ErrorCode::InvalidConfig, line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw LineError(ErrorCode::InvalidConfig, line_no, "empty key");
    if (cfg.entries_.count(key)) throw LineError(ErrorCode::InvalidConfig, line_no, "duplicate key '" + key + "'");
    try {
      cfg.set(key, value, base_dir);
    } catch (const LineError&) {
      throw;
    } catch (const Error& e) {
      throw LineError(e.code(), line_no, e.what());
    }
    cfg.entries_[key] = value;
    if (key == "seed") have_seed = true;
  }
  if (!have_seed) throw Error(ErrorCode::MissingKey, "config must set 'seed'");
  cfg.encoder.validate();
  cfg.lora.validate();
  cfg.dapt.validate();
  cfg.finetune.validate();
  if (cfg.window.overlap >= cfg.window.max_len) {
    throw Error(ErrorCode::InvalidWindow, "window.overlap must be below window.max_len");
  }
  if (!(cfg.hpo.lr_min > 0.0 && cfg.hpo.lr_min < cfg.hpo.lr_max)) {
    throw Error(ErrorCode::InvalidConfig, "hpo.lr_min must be positive and below hpo.lr_max");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  return parse(io::read_file(path));
}

void RunConfig::override_seed(std::uint64_t seed) {
  seed_ = seed;
  dapt.seed = seed;
  finetune.seed = seed;
  synth.seed = seed;
  entries_["seed"] = std::to_string(seed);
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& base_dir) {
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> m;
    auto size_key = [&m](const std::string& k, auto member_of) {
      m[k] = [k, member_of](RunConfig& c, const std::string& v) { member_of(c) = to_size(k, v); };
    };
    auto real_key = [&m](const std::string& k, auto member_of) {
      m[k] = [k, member_of](RunConfig& c, const std::string& v) { member_of(c) = to_double(k, v); };
    };
    m["seed"] = [](RunConfig& c, const std::string& v) { c.override_seed(to_u64("seed", v)); };

    size_key("encoder.vocab_size", [](RunConfig& c) -> std::size_t& { return c.encoder.vocab_size; });
    size_key("encoder.d_model", [](RunConfig& c) -> std::size_t& { return c.encoder.d_model; });
    size_key("encoder.n_layers", [](RunConfig& c) -> std::size_t& { return c.encoder.n_layers; });
    size_key("encoder.n_heads", [](RunConfig& c) -> std::size_t& { return c.encoder.n_heads; });
    size_key("encoder.d_ff", [](RunConfig& c) -> std::size_t& { return c.encoder.d_ff; });
    size_key("encoder.max_positions", [](RunConfig& c) -> std::size_t& { return c.encoder.max_positions; });
    size_key("encoder.relative_buckets", [](RunConfig& c) -> std::size_t& { return c.encoder.relative_buckets; });
    m["encoder.attention"] = [](RunConfig& c, const std::string& v) {
      c.encoder.attention_mode = encoder::parse_attention_mode(v);
    };
    real_key("encoder.dropout", [](RunConfig& c) -> double& { return c.encoder.dropout; });
    real_key("encoder.init_std", [](RunConfig& c) -> double& { return c.encoder.init_std; });
    real_key("encoder.layer_norm_eps", [](RunConfig& c) -> double& { return c.encoder.layer_norm_eps; });

    size_key("lora.rank", [](RunConfig& c) -> std::size_t& { return c.lora.rank; });
    real_key("lora.alpha", [](RunConfig& c) -> double& { return c.lora.alpha; });
    real_key("lora.dropout", [](RunConfig& c) -> double& { return c.lora.dropout; });
    m["lora.targets"] = [](RunConfig& c, const std::string& v) { c.lora.targets = lora::parse_targets(v); };

    for (const std::string stage : {"dapt", "finetune"}) {
      auto plan = [stage](RunConfig& c) -> train::TrainPlan& { return stage == "dapt" ? c.dapt : c.finetune; };
      real_key(stage + ".peak_lr", [plan](RunConfig& c) -> double& { return plan(c).peak_lr; });
      size_key(stage + ".batch_size", [plan](RunConfig& c) -> std::size_t& { return plan(c).batch_size; });
      size_key(stage + ".grad_accum_steps", [plan](RunConfig& c) -> std::size_t& { return plan(c).grad_accum_steps; });
      size_key(stage + ".epochs", [plan](RunConfig& c) -> std::size_t& { return plan(c).epochs; });
      real_key(stage + ".weight_decay", [plan](RunConfig& c) -> double& { return plan(c).weight_decay; });
      real_key(stage + ".label_smoothing", [plan](RunConfig& c) -> double& { return plan(c).label_smoothing; });
      m[stage + ".warmup_ratio"] = [stage, plan](RunConfig& c, const std::string& v) {
        plan(c).warmup_ratio = to_double(stage + ".warmup_ratio", v);
        plan(c).warmup_steps.reset();
      };
      m[stage + ".warmup_steps"] = [stage, plan](RunConfig& c, const std::string& v) {
        plan(c).warmup_steps = to_size(stage + ".warmup_steps", v);
      };
    }
    real_key("dapt.mask_rate", [](RunConfig& c) -> double& { return c.dapt.mask_rate; });
    size_key("finetune.patience", [](RunConfig& c) -> std::size_t& { return c.finetune.patience; });
    real_key("finetune.min_delta", [](RunConfig& c) -> double& { return c.finetune.min_delta; });

    size_key("hpo.n_trials", [](RunConfig& c) -> std::size_t& { return c.hpo.n_trials; });
    size_key("hpo.wave_size", [](RunConfig& c) -> std::size_t& { return c.hpo.wave_size; });
    size_key("hpo.epochs", [](RunConfig& c) -> std::size_t& { return c.hpo.epochs; });
    size_key("hpo.n_startup", [](RunConfig& c) -> std::size_t& { return c.hpo.tpe.n_startup; });
    size_key("hpo.n_candidates", [](RunConfig& c) -> std::size_t& { return c.hpo.tpe.n_candidates; });
    real_key("hpo.gamma", [](RunConfig& c) -> double& { return c.hpo.tpe.gamma; });
    real_key("hpo.lr_min", [](RunConfig& c) -> double& { return c.hpo.lr_min; });
    real_key("hpo.lr_max", [](RunConfig& c) -> double& { return c.hpo.lr_max; });

    size_key("eval.iterations", [](RunConfig& c) -> std::size_t& { return c.eval.iterations; });
    real_key("eval.alpha", [](RunConfig& c) -> double& { return c.eval.alpha; });

    real_key("carbon.power_kw", [](RunConfig& c) -> double& { return c.carbon.power_kw; });
    real_key("carbon.hours", [](RunConfig& c) -> double& { return c.carbon.hours; });
    real_key("carbon.intensity", [](RunConfig& c) -> double& { return c.carbon.intensity_g_per_kwh; });

    size_key("window.max_len", [](RunConfig& c) -> std::size_t& { return c.window.max_len; });
    size_key("window.overlap", [](RunConfig& c) -> std::size_t& { return c.window.overlap; });

    size_key("synth.sentences", [](RunConfig& c) -> std::size_t& { return c.synth.sentences; });
    size_key("synth.lexicon_size", [](RunConfig& c) -> std::size_t& { return c.synth.lexicon_size; });
    real_key("synth.dev_fraction", [](RunConfig& c) -> double& { return c.synth.dev_fraction; });
    real_key("synth.test_fraction", [](RunConfig& c) -> double& { return c.synth.test_fraction; });
    return m;
  }();

  for (PathRole role : kAllRoles) {
    if (key == path_key(role)) {
      if (value.empty()) throw Error(ErrorCode::InvalidConfig, key + ": empty path");
      fs::path p(value);
      if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
      paths_[role] = p.lexically_normal().string();
      return;
    }
  }
  const auto it = setters.find(key);
  if (it == setters.end()) throw Error(ErrorCode::UnknownKey, "unknown config key '" + key + "'");
  it->second(*this, value);
}

std::string RunConfig::read_path(Stage stage, PathRole role) const {
  if (!may_read(stage, role)) {
    throw Error(ErrorCode::RoleViolation, std::string(to_string(stage)) + " may not read " + path_key(role));
  }
  const auto it = paths_.find(role);
  if (it == paths_.end()) throw Error(ErrorCode::MissingKey, std::string(to_string(stage)) + " needs " + path_key(role));
  if (!fs::exists(it->second)) throw Error(ErrorCode::MissingPath, path_key(role) + " does not exist: " + it->second);
  return it->second;
}

std::string RunConfig::read_path_or(Stage stage, PathRole role, const std::string& fallback) const {
  if (has_path(role)) return read_path(stage, role);
  if (!may_read(stage, role)) {
    throw Error(ErrorCode::RoleViolation, std::string(to_string(stage)) + " may not read " + path_key(role));
  }
  if (!fs::exists(fallback)) throw Error(ErrorCode::MissingPath, path_key(role) + " does not exist: " + fallback);
  return fallback;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    if (k.rfind("paths.", 0) == 0) continue;
    out += k + "=" + v + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return io::fnv1a(canonical()); }

}  // namespace peftner::config
