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

#include "peftner/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include "peftner/binary_io.hpp"
#include "peftner/corpus.hpp"
#include "peftner/error.hpp"
#include "peftner/hpo.hpp"
#include "peftner/lora.hpp"
#include "peftner/synthetic.hpp"
#include "peftner/textprep.hpp"
#include "peftner/train.hpp"

namespace peftner::pipeline {

namespace {

namespace fs = std::filesystem;
using config::PathRole;
using config::RunConfig;
using config::Stage;

constexpr std::uint64_t kBaseInitTag = 10;
constexpr std::uint64_t kAdapterInitTag = 11;
constexpr std::uint64_t kHeadInitTag = 12;
constexpr std::uint64_t kSignificanceTag = 13;

RunConfig load_config(const CommandOptions& options) {
  if (options.config_path.empty()) throw Error(ErrorCode::MissingKey, "--config is required");
  auto cfg = RunConfig::load(options.config_path);
  if (options.seed) cfg.override_seed(*options.seed);
  return cfg;
}

fs::path out_dir(const CommandOptions& options) {
  fs::path dir(options.out_dir.empty() ? "." : options.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void say(const CommandOptions& options, const std::string& line) {
  if (options.log) options.log(line);
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Binary and machine-read artifacts carry no inline header; a per-stage
// manifest records their digests next to the provenance line.
void write_manifest(const fs::path& dir, Stage stage, const RunConfig& cfg, const std::vector<std::string>& files) {
  std::string text = provenance_header(stage, cfg) + "\n";
  for (const auto& name : files) {
    const auto bytes = io::read_file((dir / name).string());
    text += name + " bytes=" + std::to_string(bytes.size()) + " fnv1a=" + hex(io::fnv1a(bytes)) + "\n";
  }
  io::write_file((dir / (std::string(config::to_string(stage)) + ".manifest")).string(), text);
}

std::vector<corpus::LabeledSequence> read_conll(const std::string& path) {
  return corpus::parse_conll(io::read_file(path));
}

std::vector<std::vector<std::string>> words_of(const std::vector<corpus::LabeledSequence>& data) {
  std::vector<std::vector<std::string>> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.words);
  return out;
}

std::vector<std::vector<std::string>> labels_of(const std::vector<corpus::LabeledSequence>& data) {
  std::vector<std::vector<std::string>> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.labels);
  return out;
}

struct Backbone {
  encoder::Encoder encoder;
  textprep::Vocabulary vocab{textprep::Vocabulary::reserved_pieces()};
};

Backbone load_backbone(const RunConfig& cfg, Stage stage, const fs::path& dir) {
  Backbone b;
  const auto backbone_path = cfg.read_path_or(stage, PathRole::Backbone, (dir / kBackboneFile).string());
  const auto vocab_path = cfg.read_path_or(stage, PathRole::Vocab, (dir / kVocabFile).string());
  b.encoder = encoder::Encoder::deserialize(io::read_file(backbone_path));
  b.vocab = textprep::Vocabulary::parse(io::read_file(vocab_path));
  if (b.vocab.size() != b.encoder.config().vocab_size) {
    throw Error(ErrorCode::ShapeMismatch, "vocabulary has " + std::to_string(b.vocab.size()) +
                                              " pieces but the backbone expects " +
                                              std::to_string(b.encoder.config().vocab_size));
  }
  return b;
}

train::TaggerModel fresh_tagger(const encoder::Encoder& backbone, const lora::LoraConfig& lora_cfg,
                                const std::vector<std::string>& labels, std::uint64_t seed) {
  train::TaggerModel m;
  m.encoder = backbone;
  Rng adapter_rng(derive_seed(seed, {kAdapterInitTag}));
  lora::inject(m.encoder, lora_cfg, adapter_rng);
  Rng head_rng(derive_seed(seed, {kHeadInitTag}));
  m.head = encoder::ClassifierHead::init(backbone.config().d_model, labels, head_rng,
                                         backbone.config().init_std);
  m.head.weight.set_requires_grad(true);
  m.head.bias.set_requires_grad(true);
  return m;
}

train::TaggerModel load_tagger(const RunConfig& cfg, Stage stage, const fs::path& dir, textprep::Vocabulary& vocab) {
  auto backbone = load_backbone(cfg, stage, dir);
  vocab = backbone.vocab;
  train::TaggerModel m;
  m.encoder = std::move(backbone.encoder);
  const auto adapter = lora::load_adapter(cfg.read_path_or(stage, PathRole::Adapter, (dir / kAdapterFile).string()));
  lora::attach(m.encoder, adapter);
  m.head = encoder::ClassifierHead::deserialize(
      io::read_file(cfg.read_path_or(stage, PathRole::Head, (dir / kHeadFile).string())));
  return m;
}

std::string epoch_log(const std::string& header, const std::vector<train::EpochLog>& history, const char* metric) {
  std::string text = header + "\n";
  for (const auto& e : history) text += train::format_epoch(e, metric) + "\n";
  return text;
}

}  // namespace

std::string provenance_header(Stage stage, const RunConfig& cfg) {
  return "# peftner stage=" + std::string(config::to_string(stage)) + " seed=" + std::to_string(cfg.seed()) +
         " config=" + hex(cfg.hash());
}

void cmd_synth(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto corpus = synthetic::generate_corpus(cfg.synth);
  const auto header = provenance_header(Stage::Synth, cfg) + "\n";
  io::write_file((dir / kTrainFile).string(), header + corpus::format_conll(corpus.train));
  io::write_file((dir / kDevFile).string(), header + corpus::format_conll(corpus.dev));
  io::write_file((dir / kTestFile).string(), header + corpus::format_conll(corpus.test));
  say(options, "synth train=" + std::to_string(corpus.train.size()) + " dev=" + std::to_string(corpus.dev.size()) +
                   " test=" + std::to_string(corpus.test.size()));
}

double cmd_dapt(const CommandOptions& options) {
  auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto train_set = read_conll(cfg.read_path(Stage::Dapt, PathRole::TrainData));
  const auto dev_set = read_conll(cfg.read_path(Stage::Dapt, PathRole::DevData));
  auto text = words_of(train_set);
  if (cfg.has_path(PathRole::Unlabeled)) {
    const auto extra = corpus::parse_token_lines(io::read_file(cfg.read_path(Stage::Dapt, PathRole::Unlabeled)));
    text.insert(text.end(), extra.begin(), extra.end());
  }
  const auto vocab = textprep::build_vocab(text, cfg.encoder.vocab_size);
  auto enc_cfg = cfg.encoder;
  enc_cfg.vocab_size = vocab.size();
  const auto base = encoder::Encoder::init(enc_cfg, derive_seed(cfg.seed(), {kBaseInitTag}));
  say(options, "dapt vocab=" + std::to_string(vocab.size()) + " sequences=" + std::to_string(text.size()));

  const auto train_seqs = train::make_mlm_sequences(text, vocab, cfg.window.max_len, cfg.window.overlap);
  const auto heldout = train::make_mlm_sequences(words_of(dev_set), vocab, cfg.window.max_len, cfg.window.overlap);
  const auto result = train::train_dapt(base, train_seqs, heldout, cfg.lora, cfg.dapt, options.workers,
                                        [&](const std::string& line) { say(options, "dapt " + line); });
  const double reduction = eval::perplexity_reduction(result.base_perplexity, result.final_perplexity);

  const auto header = provenance_header(Stage::Dapt, cfg);
  io::write_file((dir / kVocabFile).string(), vocab.serialize());
  io::write_file((dir / kBackboneFile).string(), result.merged.serialize());
  lora::save_adapter((dir / kDaptAdapterFile).string(), result.adapter);
  io::write_file((dir / kDaptLogFile).string(), epoch_log(header, result.history, "perplexity"));
  io::write_file((dir / kPerplexityFile).string(),
                 header + "\nbase_perplexity=" + fixed(result.base_perplexity) +
                     "\nadapted_perplexity=" + fixed(result.final_perplexity) +
                     "\nreduction_percent=" + fixed(reduction) + "\n");
  write_manifest(dir, Stage::Dapt, cfg, {kVocabFile, kBackboneFile, kDaptAdapterFile});
  say(options, "dapt base_perplexity=" + fixed(result.base_perplexity) +
                   " adapted_perplexity=" + fixed(result.final_perplexity) + " reduction_percent=" + fixed(reduction));
  return reduction;
}

double cmd_finetune(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto train_set = read_conll(cfg.read_path(Stage::Finetune, PathRole::TrainData));
  const auto dev_set = read_conll(cfg.read_path(Stage::Finetune, PathRole::DevData));
  const auto backbone = load_backbone(cfg, Stage::Finetune, dir);
  const auto labels = corpus::label_inventory(corpus::entity_types(train_set));
  const auto model = fresh_tagger(backbone.encoder, cfg.lora, labels, cfg.seed());
  const auto budget = lora::trainable_fraction(model.encoder, &model.head);
  say(options, "finetune trainable=" + std::to_string(budget.trainable) + " frozen=" +
                   std::to_string(budget.frozen) + " percent=" + fixed(budget.percent));

  const auto result = train::train_finetune(model, backbone.vocab, train_set, dev_set, cfg.finetune, options.workers,
                                            [&](const std::string& line) { say(options, "finetune " + line); });
  const auto header = provenance_header(Stage::Finetune, cfg);
  lora::save_adapter((dir / kAdapterFile).string(), lora::extract(result.best.encoder, cfg.lora));
  io::write_file((dir / kHeadFile).string(), result.best.head.serialize());
  io::write_file((dir / kFinetuneLogFile).string(),
                 epoch_log(header, result.history, "dev_f1") + "best_epoch=" + std::to_string(result.best_epoch) +
                     " best_dev_f1=" + fixed(result.best_dev_f1) + "\n");
  write_manifest(dir, Stage::Finetune, cfg, {kAdapterFile, kHeadFile});
  say(options, "finetune best_epoch=" + std::to_string(result.best_epoch) + " dev_f1=" + fixed(result.best_dev_f1));
  return result.best_dev_f1;
}

double cmd_hpo(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto train_set = read_conll(cfg.read_path(Stage::Hpo, PathRole::TrainData));
  const auto dev_set = read_conll(cfg.read_path(Stage::Hpo, PathRole::DevData));
  const auto backbone = load_backbone(cfg, Stage::Hpo, dir);
  const auto labels = corpus::label_inventory(corpus::entity_types(train_set));

  auto space = hpo::SearchSpace::finetune_default();
  space.dims[space.index_of("lr")] = hpo::Dimension::log_uniform("lr", cfg.hpo.lr_min, cfg.hpo.lr_max);

  const auto journal = dir / kJournalFile;
  if (!fs::exists(journal)) io::write_file(journal.string(), provenance_header(Stage::Hpo, cfg) + "\n");

  hpo::StudyOptions study;
  study.n_trials = cfg.hpo.n_trials;
  study.seed = cfg.seed();
  study.wave_size = cfg.hpo.wave_size;
  study.tpe = cfg.hpo.tpe;
  study.journal_path = journal.string();

  const hpo::Objective objective = [&](const hpo::Config& c, std::size_t id, std::uint64_t trial_seed) {
    auto plan = cfg.finetune;
    plan.peak_lr = space.value(c, "lr");
    plan.batch_size = static_cast<std::size_t>(space.value(c, "batch_size"));
    plan.weight_decay = space.value(c, "weight_decay");
    plan.warmup_ratio = space.value(c, "warmup_ratio");
    plan.warmup_steps.reset();
    plan.epochs = cfg.hpo.epochs;
    plan.seed = trial_seed;
    const auto model = fresh_tagger(backbone.encoder, cfg.lora, labels, trial_seed);
    const auto result = train::train_finetune(model, backbone.vocab, train_set, dev_set, plan, options.workers);
    say(options, "hpo trial=" + std::to_string(id) + " " + space.describe(c) + " dev_f1=" + fixed(result.best_dev_f1));
    return result.best_dev_f1;
  };
  const auto result = hpo::run_study(objective, space, study);

  std::string best = provenance_header(Stage::Hpo, cfg) + "\n";
  best += "finetune.peak_lr = " + exact(space.value(result.best.config, "lr")) + "\n";
  best += "finetune.batch_size = " +
          std::to_string(static_cast<std::size_t>(space.value(result.best.config, "batch_size"))) + "\n";
  best += "finetune.weight_decay = " + exact(space.value(result.best.config, "weight_decay")) + "\n";
  best += "finetune.warmup_ratio = " + exact(space.value(result.best.config, "warmup_ratio")) + "\n";
  best += "# trial=" + std::to_string(result.best.id) + " dev_f1=" + exact(result.best.value) + "\n";
  io::write_file((dir / kBestConfigFile).string(), best);
  say(options, "hpo best_trial=" + std::to_string(result.best.id) + " dev_f1=" + fixed(result.best.value));
  return result.best.value;
}

EvaluateOutcome cmd_evaluate(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto test_set = read_conll(cfg.read_path(Stage::Evaluate, PathRole::TestData));
  const auto gold = labels_of(test_set);

  std::vector<std::vector<std::string>> pred_a;
  if (cfg.has_path(PathRole::Predictions)) {
    pred_a = labels_of(read_conll(cfg.read_path(Stage::Evaluate, PathRole::Predictions)));
  } else {
    textprep::Vocabulary vocab{textprep::Vocabulary::reserved_pieces()};
    const auto model = load_tagger(cfg, Stage::Evaluate, dir, vocab);
    pred_a = train::predict_corpus(model, vocab, words_of(test_set), options.workers, cfg.window.max_len,
                                   cfg.window.overlap);
  }

  EvaluateOutcome outcome;
  outcome.report = eval::score_labels(gold, pred_a);
  const auto header = provenance_header(Stage::Evaluate, cfg);
  io::write_file((dir / kEvalReportFile).string(),
                 header + "\n" + outcome.report.to_table() + "\n" + outcome.report.to_key_values());
  say(options, "evaluate micro_f1=" + fixed(outcome.report.micro.f1));

  if (cfg.has_path(PathRole::PredictionsB)) {
    const auto pred_b = labels_of(read_conll(cfg.read_path(Stage::Evaluate, PathRole::PredictionsB)));
    const auto report_b = eval::score_labels(gold, pred_b);
    const auto sig = eval::approx_randomization_test(gold, pred_a, pred_b, cfg.eval.iterations,
                                                     derive_seed(cfg.seed(), {kSignificanceTag}), options.workers);
    outcome.comparison = sig;
    outcome.significant = sig.p_value < cfg.eval.alpha;
    io::write_file((dir / kSignificanceFile).string(),
                   header + "\nf1_a=" + fixed(outcome.report.micro.f1) + "\nf1_b=" + fixed(report_b.micro.f1) +
                       "\nobserved=" + fixed(sig.observed) + "\niterations=" + std::to_string(sig.iterations) +
                       "\np_value=" + exact(sig.p_value) + "\nsignificant=" + (outcome.significant ? "1" : "0") +
                       "\n");
    say(options, "evaluate p_value=" + exact(sig.p_value) + " significant=" + (outcome.significant ? "1" : "0"));
  }
  return outcome;
}

void cmd_predict(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto sentences = corpus::parse_token_lines(io::read_file(cfg.read_path(Stage::Predict, PathRole::Input)));
  textprep::Vocabulary vocab{textprep::Vocabulary::reserved_pieces()};
  const auto model = load_tagger(cfg, Stage::Predict, dir, vocab);
  const auto labels =
      train::predict_corpus(model, vocab, sentences, options.workers, cfg.window.max_len, cfg.window.overlap);
  std::vector<corpus::LabeledSequence> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = {sentences[i], labels[i]};
  io::write_file((dir / kPredictionsFile).string(),
                 provenance_header(Stage::Predict, cfg) + "\n" + corpus::format_conll(out));
  say(options, "predict sentences=" + std::to_string(out.size()));
}

carbon::CarbonReport cmd_carbon(const CommandOptions& options) {
  const auto cfg = load_config(options);
  const auto dir = out_dir(options);
  const auto report = carbon::estimate_carbon(cfg.carbon.power_kw, cfg.carbon.hours, cfg.carbon.intensity_g_per_kwh);
  io::write_file((dir / kCarbonFile).string(), provenance_header(Stage::Carbon, cfg) + "\n" + report.to_key_values());
  say(options, "carbon energy_kwh=" + exact(report.energy_kwh) + " kg_co2=" + exact(report.kg_co2));
  return report;
}

}  // namespace peftner::pipeline
