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
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "peftner/encoder.hpp"
#include "peftner/hpo.hpp"
#include "peftner/lora.hpp"
#include "peftner/synthetic.hpp"
#include "peftner/train.hpp"

namespace peftner::config {

enum class Stage { Synth, Dapt, Finetune, Hpo, Evaluate, Predict, Carbon };

enum class PathRole {
  TrainData,
  DevData,
  TestData,
  Unlabeled,
  Input,
  Backbone,
  Vocab,
  Adapter,
  Head,
  Predictions,
  PredictionsB,
};

std::string_view to_string(Stage stage);
std::string_view to_string(PathRole role);
/// Config key for a role, e.g. "paths.train".
std::string path_key(PathRole role);

/// True when `stage` may read files of `role`. Only Evaluate reads TestData.
bool may_read(Stage stage, PathRole role);

struct HpoSettings {
  std::size_t n_trials = 40;
  std::size_t wave_size = 1;
  std::size_t epochs = 10;  // cap on fine-tune epochs per trial
  hpo::TpeOptions tpe;
  double lr_min = 1e-5;
  double lr_max = 5e-5;
};

struct EvalSettings {
  std::size_t iterations = 10000;
  double alpha = 0.05;
};

struct CarbonSettings {
  double power_kw = 0.0;
  double hours = 0.0;
  double intensity_g_per_kwh = 0.0;
};

struct WindowSettings {
  std::size_t max_len = textprep::kDefaultMaxLen;
  std::size_t overlap = textprep::kDefaultOverlap;
};

/// Flat `key = value` text with dotted section prefixes; '#' starts a comment
/// line. Unknown or repeated keys are rejected and `seed` is mandatory.
class RunConfig {
 public:
  /// Relative paths are joined to `base_dir` when it is nonempty.
  static RunConfig parse(std::string_view text, const std::string& base_dir = "");
  /// Relative paths in the file stay relative to the working directory.
  static RunConfig load(const std::string& path);

  std::uint64_t seed() const { return seed_; }
  void override_seed(std::uint64_t seed);

  encoder::EncoderConfig encoder;
  lora::LoraConfig lora;
  train::TrainPlan dapt = train::TrainPlan::dapt_defaults();
  train::TrainPlan finetune = train::TrainPlan::finetune_defaults();
  HpoSettings hpo;
  EvalSettings eval;
  CarbonSettings carbon;
  WindowSettings window;
  synthetic::SyntheticOptions synth;

  bool has_path(PathRole role) const { return paths_.count(role) != 0; }
  /// Resolved path for reading. Throws RoleViolation when `stage` may not read
  /// `role`, MissingKey when unset and MissingPath when the file is absent.
  std::string read_path(Stage stage, PathRole role) const;
  /// Like read_path but falls back to `fallback` when the key is unset.
  std::string read_path_or(Stage stage, PathRole role, const std::string& fallback) const;

  /// Sorted `key=value` lines of every explicit setting (after overrides).
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  void set(const std::string& key, const std::string& value, const std::string& base_dir);

  std::uint64_t seed_ = 0;
  std::map<PathRole, std::string> paths_;
  std::map<std::string, std::string> entries_;
};

}  // namespace peftner::config
