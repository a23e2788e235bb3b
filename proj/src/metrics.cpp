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

#include "difftrans/metrics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "difftrans/errors.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::metrics {

namespace {

// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("auc: labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("auc: both classes must be present");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1) / 2) / (p * n);
}

MeanSE mean_se(std::span<const double> values) {
  MeanSE r;
  r.n = values.size();
  if (values.empty()) return r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.standard_error = std::sqrt(ss / static_cast<double>(r.n - 1)) / std::sqrt(static_cast<double>(r.n));
  }
  return r;
}

double top5_mean(std::span<const double> trace) {
  if (trace.size() < 5) throw ValidationError("top-5 mean needs at least 5 entries, got " + std::to_string(trace.size()));
  std::vector<double> v(trace.begin(), trace.end());
  std::partial_sort(v.begin(), v.begin() + 5, v.end(), std::greater<>());
  return (v[0] + v[1] + v[2] + v[3] + v[4]) / 5.0;
}

MeanSE top5_mean_over_seeds(const std::vector<std::vector<double>>& traces) {
  if (traces.empty()) throw ValidationError("no seed traces given");
  std::vector<double> per_seed;
  per_seed.reserve(traces.size());
  for (const auto& t : traces) per_seed.push_back(top5_mean(t));
  return mean_se(per_seed);
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double q;
  if (lambda < 0.3) {
    // Dual (Jacobi theta) form, fast for small lambda:
    // 1 - sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = std::exp(-std::pow(2 * k - 1, 2) * M_PI * M_PI / (8.0 * lambda * lambda));
      s += term;
      if (term < 1e-300) break;
    }
    q = 1.0 - std::sqrt(2.0 * M_PI) / lambda * s;
  } else {
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      const double term = std::exp(-2.0 * k * k * lambda * lambda);
      s += (k % 2 ? 1.0 : -1.0) * term;
    }
    q = 2.0 * s;
  }
  return std::clamp(q, std::numeric_limits<double>::min(), 1.0);
}

double ks_p_value(double statistic, std::size_t n1, std::size_t n2) {
  const double ne = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);
  const double root = std::sqrt(ne);
  return kolmogorov_q((root + 0.12 + 0.11 / root) * statistic);
}

KSResult ks_two_sample(std::span<const double> s1, std::span<const double> s2) {
  if (s1.empty() || s2.empty()) throw ValidationError("ks_two_sample: both samples must be non-empty");
  std::vector<double> a(s1.begin(), s1.end()), b(s2.begin(), s2.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  // Once one sample is exhausted the gap can only shrink towards 0.
  KSResult r;
  r.statistic = d;
  r.n1 = a.size();
  r.n2 = b.size();
  r.p_value = ks_p_value(d, r.n1, r.n2);
  return r;
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins == 0 || !(hi > lo)) throw ValidationError("histogram needs bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto idx = static_cast<long>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    idx = std::clamp(idx, 0L, static_cast<long>(bins) - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

std::vector<double> average_normalized(const std::vector<Histogram>& hists) {
  if (hists.empty()) throw ValidationError("no histograms to average");
  std::vector<double> avg(hists.front().counts.size(), 0.0);
  for (const auto& h : hists) {
    if (h.counts.size() != avg.size()) throw ValidationError("histograms differ in bin count");
    const double total = static_cast<double>(h.total());
    if (total == 0) throw ValidationError("cannot normalize an empty histogram");
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += static_cast<double>(h.counts[i]) / total;
  }
  for (double& v : avg) v /= static_cast<double>(hists.size());
  return avg;
}

std::vector<std::pair<double, double>> ecdf(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    out.emplace_back(v[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal-length samples");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

PairedTest paired_t_test_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("paired test needs two equal-length samples of size >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  const MeanSE ms = mean_se(diff);
  PairedTest r;
  r.n = a.size();
  r.mean_difference = ms.mean;
  if (ms.standard_error == 0.0) {
    r.t_statistic = ms.mean > 0 ? std::numeric_limits<double>::infinity()
                                : (ms.mean < 0 ? -std::numeric_limits<double>::infinity() : 0.0);
    r.p_value = ms.mean > 0 ? 0.0 : (ms.mean < 0 ? 1.0 : 0.5);
    return r;
  }
  r.t_statistic = ms.mean / ms.standard_error;
  const boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t_statistic));
  return r;
}

AgreementReport agreement_report(const std::vector<ScoredRecord>& scored, std::size_t bins) {
  std::vector<double> low, high;
  for (const auto& s : scored) (s.record->agreement() == Agreement::kThreeOfThree ? high : low).push_back(s.confidence);
  if (low.empty()) throw ValidationError("stratum TWO_OF_THREE is empty");
  if (high.empty()) throw ValidationError("stratum THREE_OF_THREE is empty");
  auto summarize = [&](Agreement a, const std::vector<double>& v) {
    StratumSummary s;
    s.agreement = a;
    s.n = v.size();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median = median_of(v);
    s.histogram = histogram(v, bins);
    s.ecdf = ecdf(v);
    return s;
  };
  AgreementReport r;
  r.low = summarize(Agreement::kTwoOfThree, low);
  r.high = summarize(Agreement::kThreeOfThree, high);
  r.ks = ks_two_sample(high, low);
  return r;
}

const char* to_string(ImageGroup g) {
  switch (g) {
    case ImageGroup::kRealEasy: return "REAL_EASY";
    case ImageGroup::kRealHard: return "REAL_HARD";
    case ImageGroup::kGeneratedHard: return "GENERATED_HARD";
    case ImageGroup::kOtherClass: return "OTHER_CLASS";
  }
  return "?";
}

ImageGroup parse_image_group(const std::string& s) {
  for (ImageGroup g : kImageGroups)
    if (s == to_string(g)) return g;
  throw ValidationError("unknown image group '" + s + "'");
}

std::vector<GroupAgreement> blinded_test_report(const std::vector<BlindedItemLabels>& items) {
  std::vector<std::string> missing;
  for (const auto& it : items) {
    if (it.labels.size() != 3) {
      missing.push_back(it.item_id + " (has " + std::to_string(it.labels.size()) + " annotator slots)");
      continue;
    }
    for (std::size_t a = 0; a < it.labels.size(); ++a)
      if (!it.labels[a]) missing.push_back(it.item_id + "/annotator" + std::to_string(a));
  }
  if (!missing.empty()) {
    std::string msg = "incomplete annotations: ";
    for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
    throw ValidationError(msg);
  }
  std::vector<GroupAgreement> rows;
  for (ImageGroup g : kImageGroups) {
    GroupAgreement row;
    row.group = g;
    std::size_t two = 0, three = 0;
    for (const auto& it : items) {
      if (it.group != g) continue;
      ++row.n;
      int agree = 0;
      for (const auto& l : it.labels) agree += (*l == it.original_class);
      two += agree == 2;
      three += agree == 3;
    }
    if (row.n == 0) continue;
    const double n = static_cast<double>(row.n);
    row.pct_two_of_three = 100.0 * static_cast<double>(two) / n;
    row.pct_three_of_three = 100.0 * static_cast<double>(three) / n;
    row.pct_maintained = 100.0 * static_cast<double>(two + three) / n;
    rows.push_back(row);
  }
  return rows;
}

std::string format_blinded_report(const std::vector<GroupAgreement>& rows) {
  std::ostringstream os;
  os << "image_type\tn\tpct_2of3\tpct_3of3\tpct_maintained\n";
  for (const auto& r : rows)
    os << to_string(r.group) << '\t' << r.n << '\t' << tsv::fmt(r.pct_two_of_three, 1) << '\t'
       << tsv::fmt(r.pct_three_of_three, 1) << '\t' << tsv::fmt(r.pct_maintained, 1) << '\n';
  return os.str();
}

}  // namespace difftrans::metrics
