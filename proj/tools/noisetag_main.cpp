// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Batch experiment runner. Subcommands: synth, train, sweep, report. All
// outputs are files under the chosen output directory; nothing touches the
// network.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "noisetag/dataset.hpp"
#include "noisetag/error.hpp"
#include "noisetag/experiment.hpp"
#include "noisetag/kernels.hpp"
#include "noisetag/noise.hpp"

namespace {

using noisetag::experiment::Condition;
using noisetag::experiment::DataPaths;
using noisetag::experiment::ExperimentConfig;

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string condition = "curated";
  double r = 0.0;
  std::string preset = "desk";
  std::vector<std::uint64_t> seeds;
  std::uint64_t noise_seed = 1234;
  std::size_t epochs = 0;
  std::size_t batch = 0;
  std::size_t jobs = 0;
  double holdout = 0.0;
  std::size_t subsample_n = 0;
  std::string cache_dir;
  bool strict_deterministic = false;
  std::string snippet_policy = "per_epoch";
};

ExperimentConfig make_config(const TrainOptions& opt) {
  ExperimentConfig cfg;
  cfg.data = DataPaths::from_dir(opt.data_dir);
  cfg.condition = Condition::parse(opt.condition, opt.r);
  cfg.out_dir = opt.out_dir;
  cfg.noise_seed = opt.noise_seed;
  cfg.holdout_fraction = opt.holdout;
  cfg.jobs = opt.jobs;
  cfg.cache_dir = opt.cache_dir;
  if (opt.subsample_n > 0) cfg.subsample_n = opt.subsample_n;

  if (opt.preset == "desk") {
    cfg.tagger_config = noisetag::tagger::TaggerConfig::desk_preset();
    cfg.train_config = noisetag::trainer::TrainConfig::desk_preset();
  } else if (opt.preset == "paper-scale") {
    cfg.tagger_config = noisetag::tagger::TaggerConfig{};
    cfg.train_config = noisetag::trainer::TrainConfig{};
  } else {
    throw noisetag::ConfigError("unknown preset '" + opt.preset +
                                "' (expected desk|paper-scale)");
  }
  if (!opt.seeds.empty()) cfg.train_config.seeds = opt.seeds;
  if (opt.epochs > 0) {
    cfg.train_config.total_epochs = opt.epochs;
    // Keep the drop point at 80% of the schedule when rescaled.
    cfg.train_config.lr_drop_epoch =
        std::max<std::size_t>(1, opt.epochs * 4 / 5);
  }
  if (opt.batch > 0) cfg.train_config.batch_size = opt.batch;
  cfg.train_config.strict_deterministic = opt.strict_deterministic;
  if (opt.snippet_policy == "per_epoch") {
    cfg.train_config.snippet_policy =
        noisetag::trainer::SnippetPolicy::kPerEpoch;
  } else if (opt.snippet_policy == "fixed") {
    cfg.train_config.snippet_policy = noisetag::trainer::SnippetPolicy::kFixed;
  } else {
    throw noisetag::ConfigError("unknown snippet policy '" +
                                opt.snippet_policy +
                                "' (expected per_epoch|fixed)");
  }
  return cfg;
}

void add_train_options(CLI::App* cmd, TrainOptions& opt) {
  cmd->add_option("--data", opt.data_dir,
                  "Corpus directory written by `synth`")
      ->required();
  cmd->add_option("--out", opt.out_dir, "Output root directory")->required();
  cmd->add_option("--preset", opt.preset,
                  "Configuration preset: desk|paper-scale");
  cmd->add_option("--seeds", opt.seeds, "Run seeds (default 1..5)")
      ->delimiter(',');
  cmd->add_option("--noise-seed", opt.noise_seed,
                  "Seed of the label transform (shared by all runs)");
  cmd->add_option("--epochs", opt.epochs, "Override epoch count");
  cmd->add_option("--batch", opt.batch, "Override batch size");
  cmd->add_option("--jobs", opt.jobs,
                  "Parallel runs (0 = hardware concurrency)");
  cmd->add_option("--holdout", opt.holdout,
                  "Validation holdout fraction of the training split "
                  "(0.15 when given without a value)");
  cmd->add_option("--cache-dir", opt.cache_dir,
                  "Feature cache directory for test clips");
  cmd->add_flag("--strict-deterministic", opt.strict_deterministic,
                "Sequential execution; reruns are byte-identical");
  cmd->add_option("--snippet-policy", opt.snippet_policy,
                  "per_epoch (fresh snippet each epoch) or fixed");
  cmd->set_config("--config", "",
                  "Canonical key = value config file; flags override it");
}

int suite_exit_code(const noisetag::experiment::SuiteSummary& summary) {
  if (summary.complete) return 0;
  std::cerr << "suite incomplete: " << summary.dir << "\n";
  for (const auto& run : summary.runs) {
    if (!run.ok) {
      std::cerr << "  run seed " << run.seed << ": " << run.error << "\n";
    }
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  // A bare --holdout means "hold out the default 15%".
  std::vector<std::string> arg_strings(argv, argv + argc);
  for (std::size_t i = 0; i < arg_strings.size(); ++i) {
    const bool next_is_value =
        i + 1 < arg_strings.size() && !arg_strings[i + 1].empty() &&
        arg_strings[i + 1].front() != '-';
    if (arg_strings[i] == "--holdout" && !next_is_value) {
      arg_strings[i] = "--holdout=0.15";
    }
  }
  std::vector<char*> arg_ptrs;
  arg_ptrs.reserve(arg_strings.size());
  for (auto& s : arg_strings) arg_ptrs.push_back(s.data());
  argc = static_cast<int>(arg_ptrs.size());
  argv = arg_ptrs.data();

  CLI::App app{
      "noisetag: label-noise robustness experiments for music tagging"};
  app.require_subcommand(1);

  std::string backend = "auto";
  app.add_option("--backend", backend, "Kernel backend: auto|scalar|avx2");

  // --- synth ---
  auto* synth = app.add_subcommand(
      "synth", "Generate the synthetic multi-label corpus");
  std::string synth_out;
  std::uint64_t synth_seed = 7;
  noisetag::data::CorpusSpec spec;
  synth->add_option("--out", synth_out, "Corpus output directory")->required();
  synth->add_option("--seed", synth_seed, "Corpus seed");
  synth->add_option("--curated-per-class", spec.curated_train_per_class,
                    "Curated training clips per class");
  synth->add_option("--noisy-per-class", spec.noisy_train_per_class,
                    "Noisy training clips per class");
  synth->add_option("--test-per-class", spec.test_per_class,
                    "Curated test clips per class");
  synth->add_option("--two-tag-fraction", spec.two_tag_fraction,
                    "Fraction of clips with a second tag");
  synth->add_option("--flip-prob", spec.noisy_tag_flip_prob,
                    "Tag replacement probability in the noisy split");

  // --- train ---
  auto* train = app.add_subcommand(
      "train", "Train a 5-seed suite under one label condition");
  TrainOptions train_opt;
  add_train_options(train, train_opt);
  train->add_option("--condition", train_opt.condition,
                    "curated|noisy|noisy_subsampled|shuffled|corrupted");
  train->add_option("--r", train_opt.r, "Corruption rate in percent");
  train->add_option("--subsample-n", train_opt.subsample_n,
                    "Override subsample size (default: curated size)");

  // --- sweep ---
  auto* sweep = app.add_subcommand(
      "sweep", "Corruption-rate sweep with t-tests against r=0");
  TrainOptions sweep_opt;
  add_train_options(sweep, sweep_opt);
  int r_start = 0, r_end = 100, r_step = 5;
  sweep->add_option("--r-start", r_start, "First corruption rate");
  sweep->add_option("--r-end", r_end, "Last corruption rate");
  sweep->add_option("--r-step", r_step, "Sweep step");

  // --- report ---
  auto* report = app.add_subcommand(
      "report", "Render completed suites into a results table");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  report->add_option("suites", report_dirs, "Suite directories")->required();
  report->add_option("--out", report_out,
                     "Output base path (writes .txt and .csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    noisetag::kernels::force_backend(backend);

    if (synth->parsed()) {
      const auto paths = noisetag::data::synth_corpus(spec, synth_seed,
                                                      synth_out);
      std::cout << "wrote " << paths.curated_train << "\n";
      if (!paths.noisy_train.empty()) {
        std::cout << "wrote " << paths.noisy_train << "\n";
      }
      std::cout << "wrote " << paths.curated_test << "\n";
      std::cout << "wrote " << paths.vocabulary << "\n";
      return 0;
    }

    if (train->parsed()) {
      const auto summary =
          noisetag::experiment::run_condition(make_config(train_opt));
      std::cout << "suite " << summary.dir << ": "
                << (summary.aggregated
                        ? "MAP " + noisetag::eval::format_mean_std(summary.map) +
                              ", MAUC " +
                              noisetag::eval::format_mean_std(summary.mauc)
                        : "not aggregated")
                << "\n";
      return suite_exit_code(summary);
    }

    if (sweep->parsed()) {
      const auto r_values = noisetag::noise::sweep_plan(r_start, r_end, r_step);
      const auto rows = noisetag::experiment::run_sweep(make_config(sweep_opt),
                                                        r_values);
      bool all_complete = true;
      for (const auto& row : rows) all_complete = all_complete && row.complete;
      std::cout << "sweep finished: " << rows.size() << " rates\n";
      if (!all_complete) {
        std::cerr << "sweep incomplete; see suite directories\n";
        return 1;
      }
      return 0;
    }

    if (report->parsed()) {
      noisetag::experiment::write_report(report_dirs, report_out);
      std::cout << "wrote " << report_out << ".txt and " << report_out
                << ".csv\n";
      return 0;
    }
  } catch (const noisetag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
