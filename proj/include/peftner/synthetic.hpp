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
#include <vector>

#include "peftner/corpus.hpp"

namespace peftner::synthetic {

struct SyntheticOptions {
  std::size_t sentences = 5000;
  double dev_fraction = 0.1;
  double test_fraction = 0.1;
  std::size_t lexicon_size = 60;  // names per entity type
  std::uint64_t seed = 42;
};

struct SyntheticCorpus {
  std::vector<corpus::LabeledSequence> train;
  std::vector<corpus::LabeledSequence> dev;
  std::vector<corpus::LabeledSequence> test;
};

/// Entity types produced by the generator: Chemical, Disease, Gene.
const std::vector<std::string>& entity_types();

/// Template grammar over seeded lexicons. Each sentence is drawn from its
/// own stream, so the corpus depends only on the options.
SyntheticCorpus generate_corpus(const SyntheticOptions& options);

}  // namespace peftner::synthetic
