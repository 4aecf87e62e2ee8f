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

// peftner: command-line entry point.
//
//   peftner <command> --config run.cfg [--seed N] [--out DIR]
//
// Commands: synth, dapt, finetune, hpo, evaluate, predict, carbon.
// Exit status: 0 on success, 1 on any failure (one "error=<Code> ..." line on
// stderr), 3 when an evaluate comparison is not significant.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "peftner/error.hpp"
#include "peftner/parallel.hpp"
#include "peftner/pipeline.hpp"

namespace {

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace peftner;
  CLI::App app{"Parameter-efficient NER: DAPT, LoRA fine-tuning, TPE search and evaluation"};
  app.require_subcommand(1);

  pipeline::CommandOptions options;
  options.workers = worker_count();
  options.log = [](const std::string& line) {
    std::cout << line << '\n';
    std::cout.flush();
  };
  std::uint64_t seed = 0;

  const char* commands[][2] = {
      {"synth", "Write the bundled synthetic corpus splits"},
      {"dapt", "Domain-adaptive MLM pre-training with LoRA; writes the merged backbone"},
      {"finetune", "Fine-tune a LoRA adapter and tagging head with early stopping"},
      {"hpo", "TPE search over the fine-tuning hyperparameters (dev set only)"},
      {"evaluate", "Score the test split; optionally compare two systems"},
      {"predict", "Tag token-per-line input and write CoNLL"},
      {"carbon", "Estimate energy and CO2 from power, hours and grid intensity"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", options.config_path, "Run configuration (key = value)")->required();
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out", options.out_dir, "Output directory")->capture_default_str();
  }

  CLI11_PARSE(app, argc, argv);
  auto* chosen = app.get_subcommands().front();
  if (chosen->count("--seed")) options.seed = seed;
  const std::string command = chosen->get_name();

  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  try {
    if (command == "synth") {
      pipeline::cmd_synth(options);
    } else if (command == "dapt") {
      pipeline::cmd_dapt(options);
    } else if (command == "finetune") {
      pipeline::cmd_finetune(options);
    } else if (command == "hpo") {
      pipeline::cmd_hpo(options);
    } else if (command == "evaluate") {
      const auto outcome = pipeline::cmd_evaluate(options);
      std::cout << outcome.report.to_table();
      if (outcome.comparison && !outcome.significant) status = 3;
    } else if (command == "predict") {
      pipeline::cmd_predict(options);
    } else if (command == "carbon") {
      std::cout << pipeline::cmd_carbon(options).to_key_values();
    }
  } catch (const Error& e) {
    std::cerr << "error=" << to_string(e.code()) << " message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error=Internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "%s finished in %.1f s\n", command.c_str(), seconds);
  return status;
}
