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

#include "noisetag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "noisetag/error.hpp"

namespace noisetag::eval {
namespace {

void check_lengths(std::span<const double> scores,
                   std::span<const std::uint8_t> labels, const char* op) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::string(op) + ": " + std::to_string(scores.size()) +
                     " scores vs " + std::to_string(labels.size()) +
                     " labels");
  }
  if (scores.empty()) {
    throw InvalidInputError(std::string(op) + ": empty input");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw InvalidInputError(std::string(op) + ": non-finite score");
    }
  }
}

// Regularized incomplete beta function I_x(a, b) by the Lentz continued
// fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// P(|T| > t) for Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df) {
  const double x = df / (df + t * t);
  return incomplete_beta(df / 2.0, 0.5, x);
}

}  // namespace

double average_precision(std::span<const double> scores,
                         std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels, "average_precision");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });

  std::size_t positives = 0;
  double sum_precision = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != 0) {
      ++positives;
      sum_precision += static_cast<double>(positives) /
                       static_cast<double>(rank + 1);
    }
  }
  if (positives == 0) {
    throw MetricError("average_precision undefined: no positive labels");
  }
  return sum_precision / static_cast<double>(positives);
}

double roc_auc(std::span<const double> scores,
               std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels, "roc_auc");
  std::size_t pos = 0;
  for (auto l : labels) pos += l != 0 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw MetricError("roc_auc undefined: needs a positive and a negative");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] < scores[b];
                   });

  // Average ranks over tie groups, then the Mann-Whitney identity.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) /
         (p * static_cast<double>(neg));
}

EvalReport evaluate(const ScoreMatrix& scores, const data::LabelMatrix& labels,
                    const data::TagVocabulary& vocab) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) {
    throw ShapeError("evaluate: scores " + std::to_string(scores.rows) + "x" +
                     std::to_string(scores.cols) + " vs labels " +
                     std::to_string(labels.rows) + "x" +
                     std::to_string(labels.cols));
  }
  if (scores.rows == 0) throw InvalidInputError("evaluate: no clips");

  std::string degenerate;
  for (std::size_t c = 0; c < labels.cols; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.rows; ++i) pos += labels.at(i, c);
    if (pos == 0 || pos == labels.rows) {
      if (!degenerate.empty()) degenerate += ", ";
      degenerate += vocab.name(c);
    }
  }
  if (!degenerate.empty()) {
    throw MetricError(
        "evaluate: class(es) without both positives and negatives: " +
        degenerate);
  }

  EvalReport report;
  std::vector<double> col_scores(scores.rows);
  std::vector<std::uint8_t> col_labels(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    for (std::size_t i = 0; i < scores.rows; ++i) {
      col_scores[i] = scores.at(i, c);
      col_labels[i] = labels.at(i, c);
    }
    report.per_class_ap[c] = average_precision(col_scores, col_labels);
    report.per_class_auc[c] = roc_auc(col_scores, col_labels);
    report.map += report.per_class_ap[c];
    report.mauc += report.per_class_auc[c];
  }
  report.map /= static_cast<double>(scores.cols);
  report.mauc /= static_cast<double>(scores.cols);
  return report;
}

EvalReport evaluate_defined(const ScoreMatrix& scores,
                            const data::LabelMatrix& labels,
                            const data::TagVocabulary& vocab,
                            std::vector<std::string>* skipped) {
  if (scores.rows != labels.rows || scores.cols != labels.cols) {
    throw ShapeError("evaluate_defined: scores " + std::to_string(scores.rows) +
                     "x" + std::to_string(scores.cols) + " vs labels " +
                     std::to_string(labels.rows) + "x" +
                     std::to_string(labels.cols));
  }
  if (scores.rows == 0) throw InvalidInputError("evaluate_defined: no clips");

  EvalReport report;
  std::size_t defined = 0;
  std::vector<double> col_scores(scores.rows);
  std::vector<std::uint8_t> col_labels(scores.rows);
  for (std::size_t c = 0; c < scores.cols; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < labels.rows; ++i) pos += labels.at(i, c);
    if (pos == 0 || pos == labels.rows) {
      report.per_class_ap[c] = std::numeric_limits<double>::quiet_NaN();
      report.per_class_auc[c] = std::numeric_limits<double>::quiet_NaN();
      if (skipped != nullptr) skipped->push_back(vocab.name(c));
      continue;
    }
    for (std::size_t i = 0; i < scores.rows; ++i) {
      col_scores[i] = scores.at(i, c);
      col_labels[i] = labels.at(i, c);
    }
    report.per_class_ap[c] = average_precision(col_scores, col_labels);
    report.per_class_auc[c] = roc_auc(col_scores, col_labels);
    report.map += report.per_class_ap[c];
    report.mauc += report.per_class_auc[c];
    ++defined;
  }
  if (defined == 0) {
    throw MetricError("evaluate_defined: no class has both positives and "
                      "negatives");
  }
  report.map /= static_cast<double>(defined);
  report.mauc /= static_cast<double>(defined);
  return report;
}

void write_eval_report_csv(const std::string& path, const EvalReport& report,
                           const data::TagVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << "metric,class,value\n";
  char buf[96];
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "ap,%s,%.9f\n", vocab.name(c).c_str(),
                  report.per_class_ap[c]);
    out << buf;
  }
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    std::snprintf(buf, sizeof(buf), "auc,%s,%.9f\n", vocab.name(c).c_str(),
                  report.per_class_auc[c]);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "map,,%.9f\nmauc,,%.9f\n", report.map,
                report.mauc);
  out << buf;
  if (!out) throw IoError("failed writing eval report: " + path);
}

MeanStd aggregate_runs(std::span<const double> values) {
  if (values.size() < 2) {
    throw InvalidInputError("aggregate_runs: need at least 2 runs, got " +
                            std::to_string(values.size()));
  }
  MeanStd ms;
  for (double v : values) ms.mean += v;
  ms.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - ms.mean) * (v - ms.mean);
  ms.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return ms;
}

std::string format_mean_std(const MeanStd& ms) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", ms.mean, ms.std);
  return buf;
}

TTestResult paired_t_test(std::span<const double> a,
                          std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidInputError("paired_t_test: unequal lengths");
  }
  const std::size_t n = a.size();
  if (n < 2) {
    throw InvalidInputError("paired_t_test: need at least 2 pairs");
  }

  double mean_d = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_d += a[i] - b[i];
  mean_d /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean_d;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult result;
  result.df = n - 1;
  result.threshold =
      n == 5 ? kCriticalT99Df4 : student_t_critical(0.01, result.df);
  if (sd == 0.0) {
    if (mean_d == 0.0) {
      result.t = 0.0;
      result.significant = false;
    } else {
      result.t = mean_d > 0.0 ? std::numeric_limits<double>::infinity()
                              : -std::numeric_limits<double>::infinity();
      result.significant = true;
      result.degenerate = true;
    }
    return result;
  }
  result.t = mean_d / (sd / std::sqrt(static_cast<double>(n)));
  result.significant = std::fabs(result.t) > result.threshold;
  return result;
}

double student_t_critical(double two_sided_alpha, std::size_t df) {
  if (df == 0 || two_sided_alpha <= 0.0 || two_sided_alpha >= 1.0) {
    throw InvalidInputError("student_t_critical: invalid arguments");
  }
  // p(t) is strictly decreasing in t; bisect.
  double lo = 0.0, hi = 1.0;
  while (t_two_sided_p(hi, static_cast<double>(df)) > two_sided_alpha) {
    hi *= 2.0;
    if (hi > 1e8) break;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (t_two_sided_p(mid, static_cast<double>(df)) > two_sided_alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace noisetag::eval
