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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "noisetag/eval.hpp"
#include "noisetag/noise.hpp"
#include "noisetag/trainer.hpp"

namespace noisetag::experiment {

enum class ConditionKind {
  kCurated,
  kNoisy,
  kNoisySubsampled,
  kShuffled,
  kCorrupted,
};

/// A training-label condition. Conditions transform the training manifest
/// only; the test manifest is never touched.
struct Condition {
  ConditionKind kind = ConditionKind::kCurated;
  double r = 0.0;  // corruption rate for kCorrupted

  static Condition parse(const std::string& name, double r);
  std::string dir_name() const;      // e.g. "corrupted_r70"
  std::string display_name() const;  // e.g. "Corrupted Labels (r=70 %)"
};

/// Manifest and vocabulary locations, usually a directory written by the
/// synth command.
struct DataPaths {
  std::string curated_train;
  std::string noisy_train;  // may be empty when unused
  std::string test;
  std::string vocabulary;

  static DataPaths from_dir(const std::string& dir);
};

struct ExperimentConfig {
  DataPaths data;
  Condition condition;
  tagger::TaggerConfig tagger_config = tagger::TaggerConfig::desk_preset();
  trainer::TrainConfig train_config = trainer::TrainConfig::desk_preset();
  std::string out_dir;
  /// Seed of the label transform (shuffle/corrupt/subsample); shared by all
  /// runs of the suite so they see identical training labels.
  std::uint64_t noise_seed = 1234;
  double holdout_fraction = 0.0;
  std::size_t jobs = 0;  // 0 = hardware concurrency
  std::optional<std::size_t> subsample_n;
  std::string cache_dir;
};

struct SuiteSummary {
  Condition condition;
  std::string dir;
  std::vector<trainer::RunResult> runs;
  bool complete = false;
  bool aggregated = false;
  eval::MeanStd map;
  eval::MeanStd mauc;
};

/// Trains one suite (cfg.train_config.seeds runs) under the given condition
/// and writes the suite directory: resolved train manifest, corruption audit
/// when applicable, per-run directories, summary.csv and suite.txt.
SuiteSummary run_condition(const ExperimentConfig& cfg);

struct SweepRow {
  int r = 0;
  eval::MeanStd map;
  eval::MeanStd mauc;
  eval::TTestResult map_vs_r0;
  eval::TTestResult mauc_vs_r0;
  bool complete = false;
};

/// One suite per corruption rate; each rate is compared against r = 0 with
/// paired t-tests on MAP and MAUC. Writes sweep.csv and sweep.txt under
/// cfg.out_dir.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg,
                                const std::vector<int>& r_values);

/// Renders completed suites (their summary.csv files) into a results table,
/// written as <out_base>.txt and <out_base>.csv with identical numbers.
/// Missing or failed runs abort with an error that lists them.
void write_report(const std::vector<std::string>& suite_dirs,
                  const std::string& out_base);

}  // namespace noisetag::experiment
