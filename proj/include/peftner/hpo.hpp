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
#include <string>
#include <string_view>
#include <vector>

#include "peftner/rng.hpp"

namespace peftner::hpo {

struct Dimension {
  enum class Kind { Uniform, LogUniform, Categorical };

  std::string name;
  Kind kind = Kind::Uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> choices;

  static Dimension uniform(std::string name, double lo, double hi);
  static Dimension log_uniform(std::string name, double lo, double hi);
  static Dimension categorical(std::string name, std::vector<double> choices);

  void validate() const;
  bool contains(double value) const;
};

/// One value per dimension, in the space's dimension order.
using Config = std::vector<double>;

struct SearchSpace {
  std::vector<Dimension> dims;

  /// lr log-uniform [1e-5, 5e-5]; batch_size {8, 16, 32};
  /// weight_decay {0, 0.01}; warmup_ratio {0.06, 0.10}.
  static SearchSpace finetune_default();

  void validate() const;
  bool contains(const Config& config) const;
  std::size_t index_of(std::string_view name) const;
  double value(const Config& config, std::string_view name) const { return config.at(index_of(name)); }
  std::string describe(const Config& config) const;  // "name=value ..." with round-trip precision
};

enum class TrialStatus { Complete, Pruned, Failed };

std::string_view to_string(TrialStatus status);

struct Trial {
  std::size_t id = 0;
  Config config;
  double value = 0.0;  // finite when Complete
  TrialStatus status = TrialStatus::Complete;
  std::string error;
};

struct TpeOptions {
  std::size_t n_startup = 10;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
};

Config sample_uniform(const SearchSpace& space, Rng& rng);

/// Uniform while fewer than n_startup trials are complete; afterwards splits
/// completed trials at the gamma quantile (higher is better), fits per-dimension
/// Parzen densities l (good) and g (bad), draws n_candidates from l and
/// returns the one maximizing l/g.
Config suggest(const SearchSpace& space, const std::vector<Trial>& history, Rng& rng,
               const TpeOptions& options = {});

enum class Sampler { Tpe, Random };

struct StudyOptions {
  std::size_t n_trials = 40;
  std::uint64_t seed = 0;
  std::size_t wave_size = 1;   // trials suggested from the same history and run together
  std::size_t workers = 1;
  Sampler sampler = Sampler::Tpe;
  TpeOptions tpe;
  std::string journal_path;    // empty disables the journal
};

/// The objective receives the config, the trial id and a seed derived from
/// (study seed, trial id). Exceptions and non-finite values mark the trial
/// failed; the study continues.
using Objective = std::function<double(const Config& config, std::size_t trial_id, std::uint64_t trial_seed)>;

struct StudyResult {
  Trial best;
  std::vector<Trial> history;
};

/// Runs (or resumes from the journal) a study. Throws ObjectiveFailure when no
/// trial completes.
StudyResult run_study(const Objective& objective, const SearchSpace& space, const StudyOptions& options);

std::string format_trial(const SearchSpace& space, const Trial& trial);
Trial parse_trial(const SearchSpace& space, std::string_view line);

}  // namespace peftner::hpo
