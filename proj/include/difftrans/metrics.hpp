// Copyright 2026 The difftrans Authors.
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

// Evaluation statistics: ROC AUC, per-seed top-5 aggregation, the
// two-sample Kolmogorov-Smirnov test, histograms/ECDFs and the agreement
// and blinded-study reports.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "difftrans/dataset.hpp"

namespace difftrans::metrics {

// Mann-Whitney estimate of P(score_pos > score_neg) with half credit for
// ties, via rank sums with average ranks. Labels are 0/1 with 1 positive.
double auc(std::span<const double> scores, std::span<const int> labels);

struct MeanSE {
  double mean = 0.0;
  double standard_error = 0.0;  // sample stddev / sqrt(n); 0 when n == 1
  std::size_t n = 0;
};

MeanSE mean_se(std::span<const double> values);

// Mean of the five largest entries of one per-epoch AUC trace.
double top5_mean(std::span<const double> trace);
// top5_mean per seed, then mean and standard error across seeds.
MeanSE top5_mean_over_seeds(const std::vector<std::vector<double>>& traces);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0, n2 = 0;
};

// Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);
// Asymptotic p-value with n_e = n1 n2 / (n1 + n2) and
// lambda = (sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)) * D.
double ks_p_value(double statistic, std::size_t n1, std::size_t n2);
KSResult ks_two_sample(std::span<const double> sample1, std::span<const double> sample2);

struct Histogram {
  double lo = 0.0, hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t total() const;
  double bin_left(std::size_t i) const { return lo + (hi - lo) * i / counts.size(); }
  double bin_right(std::size_t i) const { return lo + (hi - lo) * (i + 1) / counts.size(); }
};

// Values outside [lo, hi] are clamped into the end bins; the last bin is closed.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo = 0.0, double hi = 1.0);
// Bin-wise average of normalized histograms; sums to 1.
std::vector<double> average_normalized(const std::vector<Histogram>& hists);

// Right-continuous ECDF evaluated at each distinct sample value.
std::vector<std::pair<double, double>> ecdf(std::span<const double> values);

double spearman(std::span<const double> x, std::span<const double> y);

// One-sided paired t-test of H1: mean(a - b) > 0.
struct PairedTest {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};
PairedTest paired_t_test_greater(std::span<const double> a, std::span<const double> b);

// ----------------------------------------------------------- agreement report

struct StratumSummary {
  Agreement agreement;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  Histogram histogram;
  std::vector<std::pair<double, double>> ecdf;
};

struct AgreementReport {
  StratumSummary low;   // TWO_OF_THREE
  StratumSummary high;  // THREE_OF_THREE
  KSResult ks;
};

struct ScoredRecord {
  const PatchRecord* record;
  double confidence;
};

// Compares confidence distributions of 2/3 and 3/3 agreement images.
// Throws ValidationError naming an empty stratum.
AgreementReport agreement_report(const std::vector<ScoredRecord>& scored, std::size_t bins = 20);

// ----------------------------------------------------------- blinded study

enum class ImageGroup { kRealEasy, kRealHard, kGeneratedHard, kOtherClass };
inline constexpr std::array<ImageGroup, 4> kImageGroups{ImageGroup::kRealEasy, ImageGroup::kRealHard,
                                                       ImageGroup::kGeneratedHard, ImageGroup::kOtherClass};
const char* to_string(ImageGroup g);
ImageGroup parse_image_group(const std::string& s);

struct BlindedItemLabels {
  std::string item_id;
  ImageGroup group;
  ClassId original_class;
  std::vector<std::optional<ClassId>> labels;  // one slot per annotator
};

struct GroupAgreement {
  ImageGroup group;
  std::size_t n = 0;
  // Share of items where exactly two / all three annotators chose the
  // original class; maintained = majority chose it (sum of the two).
  double pct_two_of_three = 0.0;
  double pct_three_of_three = 0.0;
  double pct_maintained = 0.0;
};

// Throws ValidationError listing every missing label.
std::vector<GroupAgreement> blinded_test_report(const std::vector<BlindedItemLabels>& items);

std::string format_blinded_report(const std::vector<GroupAgreement>& rows);

}  // namespace difftrans::metrics
