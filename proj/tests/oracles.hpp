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

// Reference implementations written from the definitions, independent of the
// library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "peftner/rng.hpp"

namespace peftner::oracle {

using Span = std::tuple<std::string, std::size_t, std::size_t>;

inline std::string type_of(const std::string& label) { return label.size() > 2 ? label.substr(2) : ""; }

// Every [s, e) such that labels[s] starts a T entity (B-T, or I-T not
// continuing a T entity) and labels[s+1..e) are I-T, with e maximal.
inline std::set<Span> spans_by_definition(const std::vector<std::string>& labels) {
  std::set<Span> out;
  const std::size_t n = labels.size();
  auto continues = [&](std::size_t i, const std::string& t) {
    return i > 0 && labels[i] == "I-" + t && labels[i - 1] != "O" && type_of(labels[i - 1]) == t;
  };
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] == "O") continue;
    const std::string t = type_of(labels[s]);
    if (labels[s][0] == 'I' && continues(s, t)) continue;
    std::size_t e = s + 1;
    while (e < n && continues(e, t)) ++e;
    out.emplace(t, s, e);
  }
  return out;
}

struct PRF {
  std::size_t tp = 0, fp = 0, fn = 0;
  double p = 0, r = 0, f1 = 0;
};

inline PRF brute_force_score(const std::vector<std::vector<std::string>>& gold,
                             const std::vector<std::vector<std::string>>& pred) {
  PRF out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = spans_by_definition(gold[i]);
    const auto p = spans_by_definition(pred[i]);
    for (const auto& s : p) (g.count(s) ? out.tp : out.fp) += 1;
    for (const auto& s : g) out.fn += p.count(s) ? 0 : 1;
  }
  out.p = out.tp + out.fp == 0 ? 0.0 : double(out.tp) / double(out.tp + out.fp);
  out.r = out.tp + out.fn == 0 ? 0.0 : double(out.tp) / double(out.tp + out.fn);
  out.f1 = out.p + out.r == 0 ? 0.0 : 2 * out.p * out.r / (out.p + out.r);
  return out;
}

// All stride multiples whose window ends strictly before n, then one window
// flush with the end.
inline std::vector<std::size_t> reference_windows(std::size_t n, std::size_t max_len, std::size_t overlap) {
  if (n <= max_len) return {0};
  const std::size_t stride = max_len - overlap;
  std::vector<std::size_t> starts;
  for (std::size_t k = 0; k * stride + max_len < n; ++k) starts.push_back(k * stride);
  if (starts.back() != n - max_len) starts.push_back(n - max_len);
  return starts;
}

// Winner per index: the window where the index is farthest from its nearer
// edge, earliest on ties.
inline std::vector<std::size_t> reference_owner(const std::vector<std::size_t>& starts, std::size_t n,
                                                std::size_t max_len) {
  std::vector<std::size_t> owner(n);
  for (std::size_t i = 0; i < n; ++i) {
    long best = -1;
    for (std::size_t w = 0; w < starts.size(); ++w) {
      const std::size_t end = std::min(n, starts[w] + max_len);
      if (i < starts[w] || i >= end) continue;
      const long d = static_cast<long>(std::min(i - starts[w], end - 1 - i));
      if (d > best) {
        best = d;
        owner[i] = w;
      }
    }
  }
  return owner;
}

inline std::vector<std::string> random_labels(Rng& rng, std::size_t n, const std::vector<std::string>& types) {
  std::vector<std::string> out(n);
  for (auto& l : out) {
    const auto k = rng.below(1 + 2 * types.size());
    if (k == 0) {
      l = "O";
    } else {
      l = ((k - 1) % 2 == 0 ? "B-" : "I-") + types[(k - 1) / 2];
    }
  }
  return out;
}

// One-sample Kolmogorov-Smirnov statistic against Uniform(0, 1).
inline double ks_uniform(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, std::max((i + 1) / n - xs[i], xs[i] - i / n));
  }
  return d;
}

}  // namespace peftner::oracle
