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

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisetag/dataset.hpp"

namespace noisetag::eval {

/// n_clips x 12 real-valued scores aligned with a test LabelMatrix.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = data::TagVocabulary::kNumClasses;
  std::vector<double> values;

  double at(std::size_t i, std::size_t c) const { return values[i * cols + c]; }
};

/// Average precision: rank by descending score (ties keep original order)
/// and average the precision at each positive rank. Needs at least one
/// positive.
double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels);

/// ROC AUC by rank statistics: (concordant + 0.5 * tied) / (pos * neg).
/// Needs at least one positive and one negative.
double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels);

struct EvalReport {
  std::array<double, data::TagVocabulary::kNumClasses> per_class_ap{};
  std::array<double, data::TagVocabulary::kNumClasses> per_class_auc{};
  double map = 0.0;   // arithmetic mean of per_class_ap
  double mauc = 0.0;  // arithmetic mean of per_class_auc
};

/// Macro-averaged metrics over the 12 classes. Every class must have at
/// least one positive and one negative; degenerate classes are reported by
/// name.
EvalReport evaluate(const ScoreMatrix& scores, const data::LabelMatrix& labels,
                    const data::TagVocabulary& vocab);

/// Like evaluate, but classes without both positives and negatives are
/// skipped instead of refused: their per-class slots are NaN and the macro
/// means run over the defined classes. Used for small validation holdouts.
/// Throws only when no class is defined. skipped, when given, receives the
/// names of the excluded classes.
EvalReport evaluate_defined(const ScoreMatrix& scores,
                            const data::LabelMatrix& labels,
                            const data::TagVocabulary& vocab,
                            std::vector<std::string>* skipped = nullptr);

/// Per-class report as CSV rows `metric,class,value` (ap and auc per class,
/// then map/mauc with an empty class field).
void write_eval_report_csv(const std::string& path, const EvalReport& report,
                           const data::TagVocabulary& vocab);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n-1)
};

/// Mean and sample standard deviation over per-run metric values (>= 2 runs).
MeanStd aggregate_runs(std::span<const double> values);

/// "0.767 ± 0.005" style, three decimals.
std::string format_mean_std(const MeanStd& ms);

/// Two-sided critical value used for 5-run experiments (99% confidence,
/// df = 4).
inline constexpr double kCriticalT99Df4 = 4.604;

struct TTestResult {
  double t = 0.0;
  std::size_t df = 0;
  double threshold = kCriticalT99Df4;
  bool significant = false;
  /// All differences identical but non-zero: t is unbounded.
  bool degenerate = false;
};

/// Paired t-test on per-run differences (pairing by run seed). For five runs
/// the threshold is the hard-coded 4.604; other sizes use the computed
/// two-sided 99% critical value.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// Two-sided critical value of Student's t: P(|T| > t) = alpha at the given
/// degrees of freedom.
double student_t_critical(double two_sided_alpha, std::size_t df);

}  // namespace noisetag::eval
