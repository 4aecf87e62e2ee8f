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

#include "peftner/synthetic.hpp"

#include <cctype>
#include <set>
#include <sstream>
#include <string_view>

#include "peftner/error.hpp"
#include "peftner/rng.hpp"

namespace peftner::synthetic {

namespace {

constexpr std::uint64_t kLexiconTag = 1;
constexpr std::uint64_t kSentenceTag = 2;
constexpr std::uint64_t kSplitTag = 3;

using Name = std::vector<std::string>;

const std::vector<std::string_view> kSyllables = {"me", "tho", "xa", "bro", "di", "flu", "ra", "ce", "zo",
                                                  "pi", "lo", "na", "tri", "cy", "va", "ke", "su", "mo",
                                                  "ga", "te", "vi", "ro", "pha", "qui"};

// Sentence templates: {C} chemical, {D} disease, {G} gene.
const std::vector<std::string_view> kTemplates = {
    "{C} treatment reduced {D} symptoms in the cohort .",
    "patients with {D} showed elevated {G} levels .",
    "the {G} gene is associated with {D} .",
    "{C} binds to {G} and inhibits its activity .",
    "we observed that {C} and {C} reduce {G} expression .",
    "no effect of {C} was seen in {D} .",
    "expression of {G} was measured after exposure to {C} .",
    "{D} is frequently linked to mutations in {G} .",
    "in this study , {C} was administered to mice with {D} .",
    "the results suggest a role for {G} in {D} progression .",
    "loss of {G} function causes {D} in humans .",
    "high doses of {C} may trigger {D} .",
    "{G} and {G} interact in the same pathway .",
    "the patient received {C} for {D} .",
    "we report a case of {D} after {C} therapy .",
    "knockdown of {G} increased sensitivity to {C} .",
    "samples were collected from the control group .",
    "the protocol was approved by the ethics committee .",
};

const std::vector<std::string_view> kOpeners = {"however ,", "notably ,", "in addition ,", "moreover ,",
                                                "surprisingly ,"};
const std::vector<std::string_view> kClosers = {"in vitro", "in vivo", "( p < 0.05 )", "in both groups",
                                                "over six months"};

std::string syllables(Rng& rng, std::size_t lo, std::size_t hi) {
  const std::size_t n = lo + rng.below(hi - lo + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += kSyllables[rng.below(kSyllables.size())];
  return out;
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

Name chemical(Rng& rng) {
  static const std::vector<std::string_view> suffixes = {"line", "zole", "mide", "pam", "prine", "statin"};
  Name n{syllables(rng, 2, 3) + std::string(suffixes[rng.below(suffixes.size())])};
  if (rng.bernoulli(0.2)) n.emplace_back("acid");
  return n;
}

Name disease(Rng& rng) {
  static const std::vector<std::string_view> suffixes = {"itis", "osis", "oma", "emia", "pathy"};
  if (rng.bernoulli(0.3)) {
    static const std::vector<std::string_view> heads = {"syndrome", "disease"};
    return {capitalized(syllables(rng, 2, 2)), std::string(heads[rng.below(heads.size())])};
  }
  return {syllables(rng, 2, 3) + std::string(suffixes[rng.below(suffixes.size())])};
}

Name gene(Rng& rng) {
  std::string s;
  const std::size_t letters = 2 + rng.below(3);
  for (std::size_t i = 0; i < letters; ++i) s += static_cast<char>('A' + rng.below(26));
  s += std::to_string(1 + rng.below(19));
  return {s};
}

std::vector<Name> lexicon(Name (*make)(Rng&), std::size_t size, Rng& rng) {
  std::vector<Name> out;
  std::set<Name> seen;
  while (out.size() < size) {
    Name n = make(rng);
    if (seen.insert(n).second) out.push_back(std::move(n));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

void append_entity(corpus::LabeledSequence& seq, const Name& name, const std::string& type) {
  for (std::size_t i = 0; i < name.size(); ++i) {
    seq.words.push_back(name[i]);
    seq.labels.push_back((i == 0 ? "B-" : "I-") + type);
  }
}

void append_plain(corpus::LabeledSequence& seq, std::string_view text) {
  for (auto& w : split_words(text)) {
    seq.words.push_back(std::move(w));
    seq.labels.emplace_back("O");
  }
}

}  // namespace

const std::vector<std::string>& entity_types() {
  static const std::vector<std::string> types = {"Chemical", "Disease", "Gene"};
  return types;
}

SyntheticCorpus generate_corpus(const SyntheticOptions& options) {
  if (options.sentences < 3) throw Error(ErrorCode::InvalidConfig, "synthetic corpus needs at least 3 sentences");
  if (!(options.dev_fraction > 0.0 && options.test_fraction > 0.0 &&
        options.dev_fraction + options.test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "dev and test fractions must be positive and sum below 1");
  }
  if (options.lexicon_size < 1) throw Error(ErrorCode::InvalidConfig, "lexicon_size must be at least 1");

  Rng lex_rng(derive_seed(options.seed, {kLexiconTag}));
  const auto chemicals = lexicon(&chemical, options.lexicon_size, lex_rng);
  const auto diseases = lexicon(&disease, options.lexicon_size, lex_rng);
  const auto genes = lexicon(&gene, options.lexicon_size, lex_rng);
  const auto& types = entity_types();

  std::vector<corpus::LabeledSequence> all(options.sentences);
  for (std::size_t s = 0; s < options.sentences; ++s) {
    Rng rng(derive_seed(options.seed, {kSentenceTag, s}));
    auto& seq = all[s];
    if (rng.bernoulli(0.3)) append_plain(seq, kOpeners[rng.below(kOpeners.size())]);
    const std::string_view tmpl = kTemplates[rng.below(kTemplates.size())];
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
      const std::size_t open = tmpl.find('{', pos);
      append_plain(seq, tmpl.substr(pos, open == std::string_view::npos ? std::string_view::npos : open - pos));
      if (open == std::string_view::npos) break;
      const char slot = tmpl[open + 1];
      if (slot == 'C') append_entity(seq, chemicals[rng.below(chemicals.size())], types[0]);
      if (slot == 'D') append_entity(seq, diseases[rng.below(diseases.size())], types[1]);
      if (slot == 'G') append_entity(seq, genes[rng.below(genes.size())], types[2]);
      pos = open + 3;
    }
    if (rng.bernoulli(0.3) && seq.words.back() == ".") {
      seq.words.pop_back();
      seq.labels.pop_back();
      append_plain(seq, kClosers[rng.below(kClosers.size())]);
      append_plain(seq, ".");
    }
  }

  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(options.seed, {kSplitTag}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const auto n = static_cast<double>(all.size());
  const auto n_dev = std::max<std::size_t>(1, static_cast<std::size_t>(options.dev_fraction * n));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(options.test_fraction * n));

  SyntheticCorpus out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_dev ? out.dev : (i < n_dev + n_test ? out.test : out.train);
    dst.push_back(std::move(all[order[i]]));
  }
  return out;
}

}  // namespace peftner::synthetic
