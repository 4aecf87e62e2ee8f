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

#include "peftner/hpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "peftner/error.hpp"
#include "peftner/parallel.hpp"

namespace peftner::hpo {

namespace {

constexpr std::uint64_t kSuggestTag = 1;
constexpr std::uint64_t kObjectiveTag = 2;

std::string round_trip(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_internal(const Dimension& d, double v) { return d.kind == Dimension::Kind::LogUniform ? std::log(v) : v; }

double from_internal(const Dimension& d, double v) {
  const double x = d.kind == Dimension::Kind::LogUniform ? std::exp(v) : v;
  return std::clamp(x, d.lo, d.hi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Truncated Gaussian mixture on [lo, hi] with a broad prior component.
struct Parzen {
  std::vector<double> mu;
  std::vector<double> sigma;
  double lo = 0.0;
  double hi = 1.0;

  static Parzen fit(const std::vector<double>& obs, double lo, double hi) {
    Parzen p;
    p.lo = lo;
    p.hi = hi;
    const double range = hi - lo;
    const std::size_t n = obs.size();
    double bandwidth = range;
    if (n > 1) {
      double mean = 0.0;
      for (double x : obs) mean += x;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double x : obs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(n - 1);
      bandwidth = std::sqrt(var) * std::pow(static_cast<double>(n), -0.2);
    }
    const double floor = range / std::min(100.0, 1.0 + static_cast<double>(n + 1));
    bandwidth = std::clamp(bandwidth, floor, range);
    p.mu = obs;
    p.sigma.assign(n, bandwidth);
    p.mu.push_back(0.5 * (lo + hi));
    p.sigma.push_back(range);
    return p;
  }

  double density(double x) const {
    double total = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
      const double z = (x - mu[k]) / sigma[k];
      const double mass = normal_cdf((hi - mu[k]) / sigma[k]) - normal_cdf((lo - mu[k]) / sigma[k]);
      total += std::exp(-0.5 * z * z) / (sigma[k] * std::sqrt(2.0 * std::numbers::pi) * std::max(mass, 1e-300));
    }
    return total / static_cast<double>(mu.size());
  }

  double sample(Rng& rng) const {
    const std::size_t k = rng.below(mu.size());
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double x = rng.normal(mu[k], sigma[k]);
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(mu[k], lo, hi);
  }
};

struct Categorical {
  std::vector<double> weights;

  static Categorical fit(const std::vector<double>& obs, const std::vector<double>& choices) {
    Categorical c;
    c.weights.assign(choices.size(), 1.0);
    for (double x : obs) {
      const auto it = std::find(choices.begin(), choices.end(), x);
      if (it != choices.end()) c.weights[static_cast<std::size_t>(it - choices.begin())] += 1.0;
    }
    double total = 0.0;
    for (double w : c.weights) total += w;
    for (double& w : c.weights) w /= total;
    return c;
  }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }
};

std::string field(std::string_view line, std::string_view key) {
  std::istringstream in{std::string(line)};
  std::string tok;
  const std::string prefix = std::string(key) + "=";
  while (in >> tok) {
    if (tok.rfind(prefix, 0) == 0) return tok.substr(prefix.size());
  }
  throw Error(ErrorCode::BadCheckpoint, "journal line lacks '" + std::string(key) + "': " + std::string(line));
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorCode::BadCheckpoint, "bad number '" + s + "' in journal");
  }
  return v;
}

}  // namespace

Dimension Dimension::uniform(std::string name, double lo, double hi) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::Uniform;
  d.lo = lo;
  d.hi = hi;
  return d;
}

Dimension Dimension::log_uniform(std::string name, double lo, double hi) {
  Dimension d = uniform(std::move(name), lo, hi);
  d.kind = Kind::LogUniform;
  return d;
}

Dimension Dimension::categorical(std::string name, std::vector<double> choices) {
  Dimension d;
  d.name = std::move(name);
  d.kind = Kind::Categorical;
  d.choices = std::move(choices);
  return d;
}

void Dimension::validate() const {
  if (name.empty() || name.find_first_of(" =\t\n") != std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "dimension name '" + name + "' is empty or has separators");
  }
  if (kind == Kind::Categorical) {
    if (choices.empty()) throw Error(ErrorCode::InvalidConfig, name + ": no choices");
    for (std::size_t i = 0; i < choices.size(); ++i) {
      for (std::size_t j = i + 1; j < choices.size(); ++j) {
        if (choices[i] == choices[j]) throw Error(ErrorCode::InvalidConfig, name + ": duplicate choice");
      }
    }
    return;
  }
  if (!(lo < hi)) throw Error(ErrorCode::InvalidConfig, name + ": lo must be below hi");
  if (kind == Kind::LogUniform && !(lo > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, name + ": log-uniform bounds must be positive");
  }
}

bool Dimension::contains(double value) const {
  if (kind == Kind::Categorical) return std::find(choices.begin(), choices.end(), value) != choices.end();
  return value >= lo && value <= hi;
}

SearchSpace SearchSpace::finetune_default() {
  SearchSpace s;
  s.dims.push_back(Dimension::log_uniform("lr", 1e-5, 5e-5));
  s.dims.push_back(Dimension::categorical("batch_size", {8, 16, 32}));
  s.dims.push_back(Dimension::categorical("weight_decay", {0.0, 0.01}));
  s.dims.push_back(Dimension::categorical("warmup_ratio", {0.06, 0.10}));
  return s;
}

void SearchSpace::validate() const {
  if (dims.empty()) throw Error(ErrorCode::InvalidConfig, "search space has no dimensions");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    dims[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (dims[j].name == dims[i].name) throw Error(ErrorCode::InvalidConfig, "duplicate dimension " + dims[i].name);
    }
  }
}

bool SearchSpace::contains(const Config& config) const {
  if (config.size() != dims.size()) return false;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (!dims[i].contains(config[i])) return false;
  }
  return true;
}

std::size_t SearchSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i].name == name) return i;
  }
  throw Error(ErrorCode::UnknownKey, "no search dimension named '" + std::string(name) + "'");
}

std::string SearchSpace::describe(const Config& config) const {
  std::string out;
  for (std::size_t i = 0; i < dims.size() && i < config.size(); ++i) {
    if (i) out += ' ';
    out += dims[i].name + "=" + round_trip(config[i]);
  }
  return out;
}

std::string_view to_string(TrialStatus status) {
  switch (status) {
    case TrialStatus::Complete: return "complete";
    case TrialStatus::Pruned: return "pruned";
    case TrialStatus::Failed: return "failed";
  }
  return "?";
}

Config sample_uniform(const SearchSpace& space, Rng& rng) {
  Config c;
  c.reserve(space.dims.size());
  for (const auto& d : space.dims) {
    if (d.kind == Dimension::Kind::Categorical) {
      c.push_back(d.choices[rng.below(d.choices.size())]);
    } else {
      const double lo = to_internal(d, d.lo), hi = to_internal(d, d.hi);
      c.push_back(from_internal(d, rng.uniform(lo, hi)));
    }
  }
  return c;
}

Config suggest(const SearchSpace& space, const std::vector<Trial>& history, Rng& rng, const TpeOptions& options) {
  std::vector<const Trial*> done;
  for (const auto& t : history) {
    if (t.status == TrialStatus::Complete && std::isfinite(t.value) && space.contains(t.config)) done.push_back(&t);
  }
  if (done.size() < std::max<std::size_t>(options.n_startup, 1)) return sample_uniform(space, rng);

  std::stable_sort(done.begin(), done.end(), [](const Trial* a, const Trial* b) { return a->value > b->value; });
  const auto n_good = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(done.size()))), 1, done.size());

  Config best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<Config> candidates(std::max<std::size_t>(options.n_candidates, 1), Config(space.dims.size()));
  std::vector<double> scores(candidates.size(), 0.0);

  for (std::size_t d = 0; d < space.dims.size(); ++d) {
    const auto& dim = space.dims[d];
    std::vector<double> good, bad;
    for (std::size_t i = 0; i < done.size(); ++i) {
      const double v = dim.kind == Dimension::Kind::Categorical ? done[i]->config[d] : to_internal(dim, done[i]->config[d]);
      (i < n_good ? good : bad).push_back(v);
    }
    if (dim.kind == Dimension::Kind::Categorical) {
      const auto l = Categorical::fit(good, dim.choices);
      const auto g = Categorical::fit(bad, dim.choices);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const std::size_t k = l.sample(rng);
        candidates[c][d] = dim.choices[k];
        scores[c] += std::log(l.weights[k]) - std::log(g.weights[k]);
      }
    } else {
      const double lo = to_internal(dim, dim.lo), hi = to_internal(dim, dim.hi);
      const auto l = Parzen::fit(good, lo, hi);
      const auto g = Parzen::fit(bad, lo, hi);
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const double x = l.sample(rng);
        candidates[c][d] = from_internal(dim, x);
        scores[c] += std::log(std::max(l.density(x), 1e-300)) - std::log(std::max(g.density(x), 1e-300));
      }
    }
  }
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (scores[c] > best_score || best.empty()) {
      best_score = scores[c];
      best = candidates[c];
    }
  }
  return best;
}

std::string format_trial(const SearchSpace& space, const Trial& trial) {
  std::string out = "trial=" + std::to_string(trial.id) + " status=" + std::string(to_string(trial.status)) +
                    " value=" + (trial.status == TrialStatus::Complete ? round_trip(trial.value) : std::string("nan"));
  out += " " + space.describe(trial.config);
  if (!trial.error.empty()) out += " error=" + trial.error;
  return out;
}

Trial parse_trial(const SearchSpace& space, std::string_view line) {
  Trial t;
  t.id = static_cast<std::size_t>(parse_double(field(line, "trial")));
  const std::string status = field(line, "status");
  if (status == "complete") {
    t.status = TrialStatus::Complete;
  } else if (status == "pruned") {
    t.status = TrialStatus::Pruned;
  } else if (status == "failed") {
    t.status = TrialStatus::Failed;
  } else {
    throw Error(ErrorCode::BadCheckpoint, "unknown trial status '" + status + "'");
  }
  t.value = parse_double(field(line, "value"));
  for (const auto& d : space.dims) t.config.push_back(parse_double(field(line, d.name)));
  if (t.status == TrialStatus::Failed) {
    try {
      t.error = field(line, "error");
    } catch (const Error&) {
    }
  }
  return t;
}

StudyResult run_study(const Objective& objective, const SearchSpace& space, const StudyOptions& options) {
  space.validate();
  if (options.wave_size < 1) throw Error(ErrorCode::InvalidConfig, "wave_size must be at least 1");
  StudyResult result;

  if (!options.journal_path.empty()) {
    std::ifstream in(options.journal_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line.front() == '#') continue;
      Trial t = parse_trial(space, line);
      if (t.id != result.history.size()) {
        throw Error(ErrorCode::BadCheckpoint, "journal trial ids are not consecutive at " + std::to_string(t.id));
      }
      result.history.push_back(std::move(t));
    }
  }
  std::ofstream journal;
  if (!options.journal_path.empty()) {
    journal.open(options.journal_path, std::ios::app);
    if (!journal) throw Error(ErrorCode::IoError, "cannot open journal " + options.journal_path);
  }

  while (result.history.size() < options.n_trials) {
    const std::size_t first = result.history.size();
    const std::size_t wave = std::min(options.wave_size, options.n_trials - first);
    std::vector<Trial> trials(wave);
    for (std::size_t k = 0; k < wave; ++k) {
      trials[k].id = first + k;
      Rng rng(derive_seed(options.seed, {kSuggestTag, trials[k].id}));
      trials[k].config = options.sampler == Sampler::Tpe ? suggest(space, result.history, rng, options.tpe)
                                                         : sample_uniform(space, rng);
    }
    parallel_for(wave, options.workers, [&](std::size_t k, std::size_t) {
      auto& t = trials[k];
      try {
        t.value = objective(t.config, t.id, derive_seed(options.seed, {kObjectiveTag, t.id}));
        if (std::isfinite(t.value)) {
          t.status = TrialStatus::Complete;
        } else {
          t.status = TrialStatus::Failed;
          t.error = "ObjectiveFailure";
        }
      } catch (const Error& e) {
        t.status = TrialStatus::Failed;
        t.error = std::string(to_string(e.code()));
      } catch (const std::exception&) {
        t.status = TrialStatus::Failed;
        t.error = "ObjectiveFailure";
      }
      if (t.status != TrialStatus::Complete) t.value = std::numeric_limits<double>::quiet_NaN();
    });
    for (auto& t : trials) {
      if (journal.is_open()) journal << format_trial(space, t) << '\n' << std::flush;
      result.history.push_back(std::move(t));
    }
  }

  const Trial* best = nullptr;
  for (const auto& t : result.history) {
    if (t.status == TrialStatus::Complete && (!best || t.value > best->value)) best = &t;
  }
  if (!best) throw Error(ErrorCode::ObjectiveFailure, "no trial completed");
  result.best = *best;
  return result;
}

}  // namespace peftner::hpo
