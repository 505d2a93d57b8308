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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "noisetag/error.hpp"
#include "noisetag/eval.hpp"
#include "noisetag/rng.hpp"

using namespace noisetag;

namespace {

// Brute-force average precision: for each positive, its rank and the
// positives at or above it are found by explicit pairwise counting, not by
// sorting. Ties resolve by original order.
double ap_oracle(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& labels) {
  const auto ranked_before = [&](std::size_t j, std::size_t i) {
    return scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
  };
  double total = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++positives;
    std::size_t rank = 1;
    std::size_t hits = 1;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j == i) continue;
      if (ranked_before(j, i)) {
        ++rank;
        if (labels[j]) ++hits;
      }
    }
    total += static_cast<double>(hits) / static_cast<double>(rank);
  }
  return total / static_cast<double>(positives);
}

// Brute-force AUC by exhaustive pair counting.
double auc_oracle(const std::vector<double>& scores,
                  const std::vector<std::uint8_t>& labels) {
  double concordant = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        concordant += 1.0;
      } else if (scores[i] == scores[j]) {
        concordant += 0.5;
      }
    }
  }
  return concordant / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(eval::average_precision(std::vector<double>{0.9, 0.8, 0.7, 0.1},
                                std::vector<std::uint8_t>{1, 0, 1, 0}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  CHECK(eval::average_precision(std::vector<double>{0.3, 0.9, 0.8},
                                std::vector<std::uint8_t>{0, 1, 1}) ==
        doctest::Approx(1.0));
  CHECK(eval::average_precision(std::vector<double>{0.5},
                                std::vector<std::uint8_t>{1}) == 1.0);
  CHECK_THROWS_AS(eval::average_precision(std::vector<double>{0.5, 0.2},
                                          std::vector<std::uint8_t>{0, 0}),
                  MetricError);
}

TEST_CASE("roc auc examples") {
  CHECK(eval::roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1},
                      std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
  CHECK(eval::roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9},
                      std::vector<std::uint8_t>{1, 1, 0, 0}) == 0.0);
  CHECK(eval::roc_auc(std::vector<double>{0.5, 0.5},
                      std::vector<std::uint8_t>{1, 0}) == 0.5);
  CHECK_THROWS_AS(eval::roc_auc(std::vector<double>{0.5, 0.2},
                                std::vector<std::uint8_t>{1, 1}),
                  MetricError);
}

TEST_CASE("metrics match brute force on fuzzed short vectors") {
  Rng rng(101);
  int checked = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(7);  // lengths 2..8
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    // A small score alphabet forces frequent ties.
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = 0.125 * static_cast<double>(rng.uniform_int(9));
      labels[i] = rng.uniform() < 0.45 ? 1 : 0;
    }
    std::size_t pos = 0;
    for (auto l : labels) pos += l;
    if (pos == 0 || pos == n) continue;
    ++checked;

    CHECK(std::fabs(eval::average_precision(scores, labels) -
                    ap_oracle(scores, labels)) < 1e-9);
    CHECK(std::fabs(eval::roc_auc(scores, labels) -
                    auc_oracle(scores, labels)) < 1e-9);
  }
  CHECK(checked > 8000);
}

TEST_CASE("auc complement and monotone invariance") {
  Rng rng(102);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 3 + rng.uniform_int(10);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform();  // continuous, ties have measure zero
      labels[i] = rng.uniform() < 0.5 ? 1 : 0;
    }
    std::size_t pos = 0;
    for (auto l : labels) pos += l;
    if (pos == 0 || pos == n) continue;

    std::vector<double> negated(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
      negated[i] = -scores[i];
      warped[i] = std::exp(3.0 * scores[i]) + 5.0;  // strictly increasing
    }
    const double auc = eval::roc_auc(scores, labels);
    CHECK(eval::roc_auc(negated, labels) == doctest::Approx(1.0 - auc));
    CHECK(eval::roc_auc(warped, labels) == doctest::Approx(auc));
    CHECK(eval::average_precision(warped, labels) ==
          doctest::Approx(eval::average_precision(scores, labels)));
  }
}

TEST_CASE("evaluate aggregates per-class metrics") {
  const auto& vocab = data::TagVocabulary::default_synthetic();
  const std::size_t n = 24;
  data::LabelMatrix labels;
  labels.rows = n;
  labels.values.assign(n * 12, 0);
  for (std::size_t i = 0; i < n; ++i) {
    labels.values[i * 12 + (i % 12)] = 1;
  }

  SUBCASE("scores equal to labels give perfect metrics") {
    eval::ScoreMatrix scores;
    scores.rows = n;
    scores.values.resize(n * 12);
    for (std::size_t i = 0; i < n * 12; ++i) {
      scores.values[i] = labels.values[i] ? 1.0 - 1e-6 : 1e-6;
    }
    const auto report = eval::evaluate(scores, labels, vocab);
    CHECK(report.map == doctest::Approx(1.0));
    CHECK(report.mauc == doctest::Approx(1.0));
    // The macro means are the means of the per-class values.
    double ap_mean = 0.0, auc_mean = 0.0;
    for (std::size_t c = 0; c < 12; ++c) {
      ap_mean += report.per_class_ap[c];
      auc_mean += report.per_class_auc[c];
    }
    CHECK(report.map == doctest::Approx(ap_mean / 12.0));
    CHECK(report.mauc == doctest::Approx(auc_mean / 12.0));
  }
  SUBCASE("constant scores give exactly chance MAUC") {
    eval::ScoreMatrix scores;
    scores.rows = n;
    scores.values.assign(n * 12, 0.5);
    const auto report = eval::evaluate(scores, labels, vocab);
    CHECK(report.mauc == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("a class without positives is named in the error") {
    data::LabelMatrix bad = labels;
    for (std::size_t i = 0; i < n; ++i) bad.values[i * 12 + 5] = 0;
    eval::ScoreMatrix scores;
    scores.rows = n;
    scores.values.assign(n * 12, 0.5);
    CHECK_THROWS_WITH_AS(eval::evaluate(scores, bad, vocab),
                         doctest::Contains(vocab.name(5).c_str()),
                         MetricError);
  }
  SUBCASE("the lenient variant skips undefined classes") {
    data::LabelMatrix bad = labels;
    for (std::size_t i = 0; i < n; ++i) bad.values[i * 12 + 5] = 0;
    eval::ScoreMatrix scores;
    scores.rows = n;
    scores.values.assign(n * 12, 0.5);
    std::vector<std::string> skipped;
    const auto report = eval::evaluate_defined(scores, bad, vocab, &skipped);
    CHECK(skipped == std::vector<std::string>{vocab.name(5)});
    CHECK(std::isnan(report.per_class_auc[5]));
    CHECK(report.mauc == doctest::Approx(0.5));

    // Nothing defined at all is still an error.
    data::LabelMatrix empty = labels;
    std::fill(empty.values.begin(), empty.values.end(), 1);
    CHECK_THROWS_AS(eval::evaluate_defined(scores, empty, vocab),
                    MetricError);
  }
}

TEST_CASE("per-class report file uses metric,class,value rows") {
  const auto& vocab = data::TagVocabulary::default_synthetic();
  eval::EvalReport report;
  for (std::size_t c = 0; c < 12; ++c) {
    report.per_class_ap[c] = 0.5 + 0.01 * static_cast<double>(c);
    report.per_class_auc[c] = 0.9;
    report.map += report.per_class_ap[c] / 12.0;
    report.mauc += report.per_class_auc[c] / 12.0;
  }
  const auto path =
      (std::filesystem::temp_directory_path() / "nt_eval_report.csv").string();
  eval::write_eval_report_csv(path, report, vocab);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "metric,class,value");
  std::size_t ap_rows = 0, auc_rows = 0;
  bool saw_map = false, saw_mauc = false;
  while (std::getline(in, line)) {
    if (line.rfind("ap,", 0) == 0) ++ap_rows;
    if (line.rfind("auc,", 0) == 0) ++auc_rows;
    if (line.rfind("map,,", 0) == 0) saw_map = true;
    if (line.rfind("mauc,,", 0) == 0) saw_mauc = true;
  }
  CHECK(ap_rows == 12);
  CHECK(auc_rows == 12);
  CHECK(saw_map);
  CHECK(saw_mauc);
  std::filesystem::remove(path);
}

TEST_CASE("aggregate_runs") {
  const std::vector<double> same{0.7, 0.7, 0.7, 0.7, 0.7};
  const auto a = eval::aggregate_runs(same);
  CHECK(a.mean == doctest::Approx(0.7));
  CHECK(a.std == doctest::Approx(0.0));

  const std::vector<double> two{0.6, 0.8};
  const auto b = eval::aggregate_runs(two);
  CHECK(b.mean == doctest::Approx(0.7));
  CHECK(b.std == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));

  CHECK_THROWS_AS(eval::aggregate_runs(std::vector<double>{0.5}),
                  InvalidInputError);
}

TEST_CASE("mean-std formatting") {
  CHECK(eval::format_mean_std({0.767, 0.005}) == "0.767 ± 0.005");
  CHECK(eval::format_mean_std({0.5024, 0.0071}) == "0.502 ± 0.007");
}

TEST_CASE("paired t-test") {
  SUBCASE("hand-evaluated example") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 2, 4, 4, 6};
    const auto r = eval::paired_t_test(a, b);
    CHECK(std::fabs(r.t - (-2.449489742783178)) < 1e-3);
    CHECK(r.df == 4);
    CHECK(r.threshold == eval::kCriticalT99Df4);
    CHECK(!r.significant);
  }
  SUBCASE("identical samples give t = 0") {
    const std::vector<double> a{1, 2, 3};
    const auto r = eval::paired_t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(!r.significant);
    CHECK(!r.degenerate);
  }
  SUBCASE("antisymmetry") {
    Rng rng(103);
    std::vector<double> a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform();
    }
    const auto r1 = eval::paired_t_test(a, b);
    const auto r2 = eval::paired_t_test(b, a);
    CHECK(r1.t == doctest::Approx(-r2.t));
    CHECK(r1.significant == r2.significant);
  }
  SUBCASE("constant non-zero differences are degenerate-significant") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{0, 1, 2, 3, 4};
    const auto r = eval::paired_t_test(a, b);
    CHECK(r.significant);
    CHECK(r.degenerate);
    CHECK(std::isinf(r.t));
  }
  SUBCASE("the five-run threshold is 4.604") {
    CHECK(eval::kCriticalT99Df4 == 4.604);
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 2, 4, 4, 6};
    CHECK(eval::paired_t_test(a, b).threshold == 4.604);
  }
  SUBCASE("other run counts use the computed critical value") {
    const std::vector<double> a{1, 2, 3};
    const std::vector<double> b{3, 1, 2};
    const auto r = eval::paired_t_test(a, b);
    CHECK(r.df == 2);
    CHECK(r.threshold == doctest::Approx(9.925).epsilon(1e-3));
  }
  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(eval::paired_t_test(std::vector<double>{1, 2},
                                        std::vector<double>{1, 2, 3}),
                    InvalidInputError);
  }
}

TEST_CASE("inverse t recovers textbook critical values") {
  CHECK(eval::student_t_critical(0.01, 4) ==
        doctest::Approx(4.604).epsilon(1e-3));
  CHECK(eval::student_t_critical(0.05, 9) ==
        doctest::Approx(2.262).epsilon(1e-3));
  CHECK(eval::student_t_critical(0.05, 1) ==
        doctest::Approx(12.706).epsilon(1e-3));
  CHECK(eval::student_t_critical(0.01, 100) ==
        doctest::Approx(2.626).epsilon(1e-3));
  CHECK_THROWS_AS(eval::student_t_critical(0.0, 4), InvalidInputError);
  CHECK_THROWS_AS(eval::student_t_critical(0.01, 0), InvalidInputError);
}
