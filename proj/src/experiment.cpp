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

#include "noisetag/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noisetag/error.hpp"

namespace fs = std::filesystem;

namespace noisetag::experiment {
namespace {

std::string fmt_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Condition Condition::parse(const std::string& name, double r) {
  Condition c;
  if (name == "curated") {
    c.kind = ConditionKind::kCurated;
  } else if (name == "noisy") {
    c.kind = ConditionKind::kNoisy;
  } else if (name == "noisy_subsampled") {
    c.kind = ConditionKind::kNoisySubsampled;
  } else if (name == "shuffled") {
    c.kind = ConditionKind::kShuffled;
  } else if (name == "corrupted") {
    c.kind = ConditionKind::kCorrupted;
    if (r < 0.0 || r > 100.0) {
      throw ConfigError("corruption rate must be in [0, 100], got " +
                        fmt_rate(r));
    }
    c.r = r;
  } else {
    throw ConfigError(
        "unknown condition '" + name +
        "' (expected curated|noisy|noisy_subsampled|shuffled|corrupted)");
  }
  return c;
}

std::string Condition::dir_name() const {
  switch (kind) {
    case ConditionKind::kCurated:
      return "curated";
    case ConditionKind::kNoisy:
      return "noisy";
    case ConditionKind::kNoisySubsampled:
      return "noisy_subsampled";
    case ConditionKind::kShuffled:
      return "shuffled";
    case ConditionKind::kCorrupted:
      return "corrupted_r" + fmt_rate(r);
  }
  return "unknown";
}

std::string Condition::display_name() const {
  switch (kind) {
    case ConditionKind::kCurated:
      return "Curated Labels";
    case ConditionKind::kNoisy:
      return "Noisy Labels";
    case ConditionKind::kNoisySubsampled:
      return "Noisy Labels (subsampled)";
    case ConditionKind::kShuffled:
      return "Random Labels";
    case ConditionKind::kCorrupted:
      return "Corrupted Labels (r=" + fmt_rate(r) + " %)";
  }
  return "Unknown";
}

DataPaths DataPaths::from_dir(const std::string& dir) {
  DataPaths paths;
  paths.curated_train = (fs::path(dir) / "train_curated.csv").string();
  paths.test = (fs::path(dir) / "test_curated.csv").string();
  paths.vocabulary = (fs::path(dir) / "vocabulary.txt").string();
  const fs::path noisy = fs::path(dir) / "train_noisy.csv";
  if (fs::exists(noisy)) paths.noisy_train = noisy.string();
  return paths;
}

namespace {

struct PreparedTraining {
  data::Manifest manifest;
  std::optional<noise::CorruptionPlan> plan;
};

PreparedTraining prepare_training_manifest(const ExperimentConfig& cfg,
                                           const data::TagVocabulary& vocab) {
  PreparedTraining prepared;
  const auto load_curated = [&] {
    return data::load_manifest(cfg.data.curated_train, vocab,
                               data::SplitRole::kTrain);
  };
  const auto load_noisy = [&] {
    if (cfg.data.noisy_train.empty()) {
      throw ConfigError("condition needs a noisy training manifest");
    }
    return data::load_manifest(cfg.data.noisy_train, vocab,
                               data::SplitRole::kTrain);
  };

  switch (cfg.condition.kind) {
    case ConditionKind::kCurated: {
      prepared.manifest = load_curated();
      break;
    }
    case ConditionKind::kNoisy: {
      prepared.manifest = load_noisy();
      break;
    }
    case ConditionKind::kNoisySubsampled: {
      const data::Manifest noisy = load_noisy();
      const std::size_t n =
          cfg.subsample_n.value_or(load_curated().records.size());
      Rng rng(derive_seed(cfg.noise_seed, Stream::kSubsample));
      prepared.manifest = data::subsample(noisy, n, rng);
      break;
    }
    case ConditionKind::kShuffled: {
      Rng rng(derive_seed(cfg.noise_seed, Stream::kLabelShuffle));
      prepared.manifest = noise::shuffle_labels(load_curated(), rng);
      break;
    }
    case ConditionKind::kCorrupted: {
      Rng rng(derive_seed(cfg.noise_seed, Stream::kCorrupt));
      auto [manifest, plan] =
          noise::corrupt_labels(load_curated(), cfg.condition.r, rng);
      prepared.manifest = std::move(manifest);
      prepared.plan = std::move(plan);
      break;
    }
  }
  return prepared;
}

void write_suite_files(const std::string& suite_dir, const SuiteSummary& s,
                       const ExperimentConfig& cfg) {
  std::ofstream csv(fs::path(suite_dir) / "summary.csv",
                    std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write summary.csv in " + suite_dir);
  csv << "condition,seed,status,map,mauc,val_map,val_mauc\n";
  for (const auto& run : s.runs) {
    csv << s.condition.dir_name() << ',' << run.seed << ','
        << (run.ok ? "ok" : "failed") << ',';
    if (run.ok && run.has_test) {
      csv << fmt_metric(run.test_map) << ',' << fmt_metric(run.test_mauc);
    } else {
      csv << ',';
    }
    csv << ',';
    if (run.ok && run.has_val) {
      csv << fmt_metric(run.val_map) << ',' << fmt_metric(run.val_mauc);
    } else {
      csv << ',';
    }
    csv << '\n';
  }

  std::ofstream txt(fs::path(suite_dir) / "suite.txt",
                    std::ios::binary | std::ios::trunc);
  if (!txt) throw IoError("cannot write suite.txt in " + suite_dir);
  txt << "condition: " << s.condition.display_name() << "\n";
  txt << "runs: " << s.runs.size() << "\n";
  if (s.aggregated) {
    txt << "MAP:  " << eval::format_mean_std(s.map) << "\n";
    txt << "MAUC: " << eval::format_mean_std(s.mauc) << "\n";
  } else {
    txt << "MAP:  (not aggregated; needs >= 2 completed runs)\n";
    txt << "MAUC: (not aggregated; needs >= 2 completed runs)\n";
  }
  txt << "complete: " << (s.complete ? "yes" : "no") << "\n";
  for (const auto& run : s.runs) {
    if (!run.ok) {
      txt << "failed run seed " << run.seed << ": " << run.error << "\n";
    }
  }
  if (cfg.holdout_fraction > 0.0) {
    txt << "holdout_fraction: " << cfg.holdout_fraction << "\n";
  }
}

void write_experiment_config(const std::string& suite_dir,
                             const ExperimentConfig& cfg) {
  std::ofstream out(fs::path(suite_dir) / "experiment.toml",
                    std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write experiment.toml in " + suite_dir);
  out << "condition = " << cfg.condition.dir_name() << "\n";
  out << "noise_seed = " << cfg.noise_seed << "\n";
  out << "holdout_fraction = " << cfg.holdout_fraction << "\n";
  out << "curated_train = " << cfg.data.curated_train << "\n";
  out << "noisy_train = " << cfg.data.noisy_train << "\n";
  out << "test = " << cfg.data.test << "\n";
  out << "vocabulary = " << cfg.data.vocabulary << "\n";
  out << "\n[train]\n" << cfg.train_config.canonical_text();
  out << "\n[tagger]\n" << cfg.tagger_config.canonical_text();
}

}  // namespace

SuiteSummary run_condition(const ExperimentConfig& cfg) {
  cfg.train_config.validate();
  cfg.tagger_config.validate();
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must be set");
  if (cfg.holdout_fraction < 0.0 || cfg.holdout_fraction >= 1.0) {
    throw ConfigError("holdout fraction must be in [0, 1)");
  }

  const data::TagVocabulary vocab =
      data::TagVocabulary::load(cfg.data.vocabulary);
  PreparedTraining prepared = prepare_training_manifest(cfg, vocab);

  const std::string suite_dir =
      (fs::path(cfg.out_dir) / cfg.condition.dir_name()).string();
  fs::create_directories(suite_dir);
  write_experiment_config(suite_dir, cfg);

  // Optional validation holdout carved out of the (already transformed)
  // training manifest.
  std::optional<data::Manifest> val_manifest;
  if (cfg.holdout_fraction > 0.0) {
    const std::size_t n = prepared.manifest.records.size();
    const auto n_val = static_cast<std::size_t>(
        std::llround(cfg.holdout_fraction * static_cast<double>(n)));
    if (n_val > 0 && n_val < n) {
      Rng rng(derive_seed(cfg.noise_seed, Stream::kHoldout));
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      for (std::size_t i = 0; i < n_val; ++i) {
        const std::size_t j = i + rng.uniform_int(n - i);
        std::swap(idx[i], idx[j]);
      }
      std::vector<bool> is_val(n, false);
      for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;

      data::Manifest train_part, val_part;
      train_part.split_role = data::SplitRole::kTrain;
      train_part.base_dir = prepared.manifest.base_dir;
      val_part.split_role = data::SplitRole::kTrain;
      val_part.base_dir = prepared.manifest.base_dir;
      for (std::size_t i = 0; i < n; ++i) {
        (is_val[i] ? val_part : train_part)
            .records.push_back(prepared.manifest.records[i]);
      }
      prepared.manifest = std::move(train_part);
      val_manifest = std::move(val_part);
    }
  }

  data::save_manifest((fs::path(suite_dir) / "train_manifest.csv").string(),
                      prepared.manifest, vocab);
  if (prepared.plan) {
    noise::save_plan_csv((fs::path(suite_dir) / "corruption_plan.csv").string(),
                         *prepared.plan, vocab);
  }

  const data::Manifest test_manifest =
      data::load_manifest(cfg.data.test, vocab, data::SplitRole::kTest);
  const trainer::TestSet test_set =
      trainer::build_test_set(test_manifest, vocab, cfg.cache_dir);
  std::optional<trainer::TestSet> val_set;
  if (val_manifest) {
    val_set = trainer::build_test_set(*val_manifest, vocab, "");
  }

  SuiteSummary summary;
  summary.condition = cfg.condition;
  summary.dir = suite_dir;
  summary.runs = trainer::run_suite(
      prepared.manifest, vocab, cfg.tagger_config, cfg.train_config, &test_set,
      val_set ? &*val_set : nullptr, suite_dir, cfg.jobs);

  summary.complete = true;
  std::vector<double> maps, maucs;
  for (const auto& run : summary.runs) {
    if (run.ok && run.has_test) {
      maps.push_back(run.test_map);
      maucs.push_back(run.test_mauc);
    } else {
      summary.complete = false;
    }
  }
  if (maps.size() >= 2) {
    summary.map = eval::aggregate_runs(maps);
    summary.mauc = eval::aggregate_runs(maucs);
    summary.aggregated = true;
  }

  write_suite_files(suite_dir, summary, cfg);
  return summary;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg,
                                const std::vector<int>& r_values) {
  if (r_values.empty()) throw ConfigError("sweep needs at least one rate");

  std::vector<SweepRow> rows;
  std::vector<double> r0_maps, r0_maucs;

  for (std::size_t i = 0; i < r_values.size(); ++i) {
    ExperimentConfig sub = cfg;
    sub.condition = Condition::parse("corrupted", r_values[i]);
    const SuiteSummary summary = run_condition(sub);

    SweepRow row;
    row.r = r_values[i];
    row.complete = summary.complete;
    row.map = summary.map;
    row.mauc = summary.mauc;

    std::vector<double> maps, maucs;
    for (const auto& run : summary.runs) {
      if (run.ok && run.has_test) {
        maps.push_back(run.test_map);
        maucs.push_back(run.test_mauc);
      }
    }
    if (i == 0) {
      r0_maps = maps;
      r0_maucs = maucs;
    }
    if (maps.size() == r0_maps.size() && maps.size() >= 2) {
      row.map_vs_r0 = eval::paired_t_test(maps, r0_maps);
      row.mauc_vs_r0 = eval::paired_t_test(maucs, r0_maucs);
    }
    rows.push_back(row);
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "sweep.csv",
                    std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write sweep.csv in " + cfg.out_dir);
  csv << "r,map_mean,map_std,mauc_mean,mauc_std,t_map_vs_r0,map_significant,"
         "t_mauc_vs_r0,mauc_significant\n";
  char buf[256];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.3f,%.3f,%.3f,%.3f,%.3f,%s,%.3f,%s\n",
                  row.r, row.map.mean, row.map.std, row.mauc.mean,
                  row.mauc.std, row.map_vs_r0.t,
                  row.map_vs_r0.significant ? "yes" : "no", row.mauc_vs_r0.t,
                  row.mauc_vs_r0.significant ? "yes" : "no");
    csv << buf;
  }

  std::ofstream txt(fs::path(cfg.out_dir) / "sweep.txt",
                    std::ios::binary | std::ios::trunc);
  if (!txt) throw IoError("cannot write sweep.txt in " + cfg.out_dir);
  txt << "   r            MAP            MAUC   |t| vs r=0 (MAP)  significant\n";
  txt << "-----------------------------------------------------------------\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%4d  %s  %s  %10.3f  %s\n", row.r,
                  eval::format_mean_std(row.map).c_str(),
                  eval::format_mean_std(row.mauc).c_str(),
                  std::fabs(row.map_vs_r0.t),
                  row.map_vs_r0.significant ? "yes" : "no");
    txt << buf;
  }
  return rows;
}

void write_report(const std::vector<std::string>& suite_dirs,
                  const std::string& out_base) {
  if (suite_dirs.empty()) throw ConfigError("report needs suite directories");

  struct Row {
    std::string label;
    eval::MeanStd map, mauc;
  };
  std::vector<Row> rows;
  std::string missing;

  for (const auto& dir : suite_dirs) {
    const fs::path summary_path = fs::path(dir) / "summary.csv";
    if (!fs::exists(summary_path)) {
      missing += "\n  " + dir + ": no summary.csv";
      continue;
    }
    std::ifstream in(summary_path);
    std::string line;
    std::getline(in, line);  // header
    std::string condition;
    std::vector<double> maps, maucs;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
      ++row_no;
      if (line.empty()) continue;
      const auto fields = split_csv(line);
      if (fields.size() < 5) {
        throw ParseError(summary_path.string() + " row " +
                         std::to_string(row_no) + ": bad summary row");
      }
      condition = fields[0];
      if (fields[2] != "ok" || fields[3].empty()) {
        missing += "\n  " + dir + ": run seed " + fields[1] + " " + fields[2];
        continue;
      }
      maps.push_back(std::stod(fields[3]));
      maucs.push_back(std::stod(fields[4]));
    }
    if (maps.size() < 2) {
      missing += "\n  " + dir + ": fewer than 2 completed runs";
      continue;
    }
    // Reconstruct the display label from the stored condition name.
    Row row;
    if (condition == "curated") {
      row.label = "Curated Labels";
    } else if (condition == "noisy") {
      row.label = "Noisy Labels";
    } else if (condition == "noisy_subsampled") {
      row.label = "Noisy Labels (subsampled)";
    } else if (condition == "shuffled") {
      row.label = "Random Labels";
    } else if (condition.rfind("corrupted_r", 0) == 0) {
      row.label =
          "Corrupted Labels (r=" + condition.substr(11) + " %)";
    } else {
      row.label = condition;
    }
    row.map = eval::aggregate_runs(maps);
    row.mauc = eval::aggregate_runs(maucs);
    rows.push_back(row);
  }

  if (!missing.empty()) {
    throw Error("report: incomplete suites:" + missing);
  }

  std::ofstream txt(out_base + ".txt", std::ios::binary | std::ios::trunc);
  if (!txt) throw IoError("cannot write " + out_base + ".txt");
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-34s %-16s %-16s\n", "Training Data",
                "MAP", "MAUC");
  txt << buf;
  txt << std::string(66, '-') << "\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-34s %-16s %-16s\n", row.label.c_str(),
                  eval::format_mean_std(row.map).c_str(),
                  eval::format_mean_std(row.mauc).c_str());
    txt << buf;
  }

  std::ofstream csv(out_base + ".csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + out_base + ".csv");
  csv << "condition,map_mean,map_std,mauc_mean,mauc_std\n";
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%.3f,%.3f,%.3f\n",
                  row.label.c_str(), row.map.mean, row.map.std, row.mauc.mean,
                  row.mauc.std);
    csv << buf;
  }
}

}  // namespace noisetag::experiment
