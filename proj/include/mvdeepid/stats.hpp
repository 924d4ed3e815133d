#pragma once

// Paired t statistics over aligned per-epoch error curves and the model
// comparison table built from them.

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvdeepid/train.hpp"

namespace mvdeepid {

struct TTestResult {
  std::size_t n = 0;
  double meanDiff = 0.0;
  double sampleStdDiff = 0.0;
  double t = 0.0;
  // Zero spread with a nonzero mean: t is reported as a signed infinity.
  bool degenerate = false;
};

/// t = mean(d) * sqrt(n) / sd(d) with d_i = a_i - b_i and sd the n-1
/// sample standard deviation. t = 0 when every d_i is zero.
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_t_test: series lengths differ (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
  TTestResult r;
  r.n = a.size();
  const double n = static_cast<double>(r.n);
  std::vector<double> d(r.n);
  double sum = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    d[i] = a[i] - b[i];
    sum += d[i];
  }
  r.meanDiff = sum / n;
  double ss = 0.0;
  for (double v : d) ss += (v - r.meanDiff) * (v - r.meanDiff);
  r.sampleStdDiff = std::sqrt(ss / (n - 1.0));
  if (r.sampleStdDiff > 0.0) {
    r.t = r.meanDiff * std::sqrt(n) / r.sampleStdDiff;
  } else if (r.meanDiff != 0.0) {
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.meanDiff);
    r.degenerate = true;
  }
  return r;
}

inline std::vector<double> error_series(const RunReport& r, Split split) {
  std::vector<double> v;
  v.reserve(r.curve.size());
  for (const EpochRecord& e : r.curve)
    v.push_back(split == Split::Train   ? e.trainError
                : split == Split::Valid ? e.validError
                                        : e.testError);
  return v;
}

struct AccuracyRow {
  std::string method;
  double train = 0.0, valid = 0.0, test = 0.0;
};

struct TTestRow {
  std::string comparison;  // "<a>_vs_<b>"; positive t means b has lower error
  TTestResult train, valid, test;
};

struct ComparisonTable {
  std::vector<AccuracyRow> accuracy;
  std::vector<TTestRow> tests;
};

/// Accuracy rows per report and t-tests for every ordered pair (i < j)
/// over the train/valid/test error curves.
inline ComparisonTable compare(const std::vector<const RunReport*>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("compare: need at least two reports");
  const RunReport& ref = *reports.front();
  for (const RunReport* r : reports) {
    if (r->config.epochs != ref.config.epochs || r->curve.size() != ref.curve.size())
      throw std::invalid_argument("compare: reports have different epoch counts (" +
                                  std::to_string(r->curve.size()) + " vs " +
                                  std::to_string(ref.curve.size()) + ")");
    if (r->config.viewOrder != ref.config.viewOrder)
      throw std::invalid_argument("compare: reports come from different view groups (" +
                                  views_string(r->config.viewOrder) + " vs " +
                                  views_string(ref.config.viewOrder) + ")");
  }
  ComparisonTable t;
  for (const RunReport* r : reports)
    t.accuracy.push_back({kind_name(r->config.kind), r->trainAccuracy, r->validAccuracy,
                          r->testAccuracy});
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t j = i + 1; j < reports.size(); ++j) {
      auto tt = [&](Split s) {
        const auto a = error_series(*reports[i], s), b = error_series(*reports[j], s);
        return paired_t_test(a, b);
      };
      t.tests.push_back({kind_name(reports[i]->config.kind) + "_vs_" +
                             kind_name(reports[j]->config.kind),
                         tt(Split::Train), tt(Split::Valid), tt(Split::Test)});
    }
  }
  return t;
}

}  // namespace mvdeepid
