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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "difftrans/errors.hpp"
#include "difftrans/metrics.hpp"

using namespace difftrans;
using namespace difftrans::metrics;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& v, double x) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [x](double u) { return u <= x; })) /
           static_cast<double>(v.size());
  };
  double d = 0;
  for (const auto* v : {&a, &b})
    for (double x : *v) d = std::max(d, std::abs(cdf(a, x) - cdf(b, x)));
  return d;
}

std::vector<double> coarse_sample(std::mt19937_64& g, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(g() % 7) / 7.0;
  return v;
}

}  // namespace

TEST_CASE("auc basic values") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(sep, y) == 1.0);
  const std::vector<double> flat(4, 0.3);
  CHECK(auc(flat, y) == 0.5);
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  CHECK(auc(s, y) == doctest::Approx(brute_auc(s, y)).epsilon(1e-15));
  CHECK(auc(s, y) == 0.75);
  const std::vector<int> one{1, 1, 1, 1};
  CHECK_THROWS_AS(auc(s, one), ValidationError);
  const std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(auc(s, short_labels), ValidationError);
}

TEST_CASE("auc matches pair counting on random instances") {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + g() % 29;
    std::vector<double> s = coarse_sample(g, n);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(g() % 2);
    y[0] = 0;
    y[1] = 1;
    const double a = auc(s, y);
    CHECK(std::abs(a - brute_auc(s, y)) <= 1e-12);

    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(), [](double x) { return std::exp(3 * x) - 7; });
    CHECK(auc(t, y) == doctest::Approx(a).epsilon(1e-12));
    std::vector<int> r(y.size());
    std::transform(y.begin(), y.end(), r.begin(), [](int v) { return 1 - v; });
    CHECK(auc(s, r) == doctest::Approx(1.0 - a).epsilon(1e-12));
  }
}

TEST_CASE("ks statistic matches brute force and monotone transforms") {
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(ks_two_sample(a, b).statistic == 1.0);
  CHECK(ks_two_sample(a, a).statistic == 0.0);
  CHECK(ks_two_sample(a, a).p_value == doctest::Approx(1.0));
  const std::vector<double> none;
  CHECK_THROWS_AS(ks_two_sample(none, a), ValidationError);

  std::mt19937_64 g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = coarse_sample(g, 1 + g() % 20);
    const auto y = coarse_sample(g, 1 + g() % 20);
    const KSResult r = ks_two_sample(x, y);
    CHECK(r.statistic == brute_ks(x, y));
    CHECK(r.n1 == x.size());
    CHECK(r.n2 == y.size());
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
    std::vector<double> tx(x), ty(y);
    for (auto& v : tx) v = std::log1p(v) * 5;
    for (auto& v : ty) v = std::log1p(v) * 5;
    CHECK(ks_two_sample(tx, ty).statistic == r.statistic);
  }
}

TEST_CASE("ks p-value anchors") {
  const double p = ks_p_value(0.302, 860, 670);
  CHECK(p > 1.5e-30 / 3);
  CHECK(p < 1.5e-30 * 3);
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(1.0) == doctest::Approx(0.26999967).epsilon(1e-6));
  CHECK(ks_p_value(0.0, 10, 10) == 1.0);
  double last = 1.0;
  for (double d = 0.01; d <= 1.0; d += 0.01) {
    const double q = ks_p_value(d, 50, 40);
    CHECK(q <= last + 1e-15);
    last = q;
  }
}

TEST_CASE("ks calibration on one distribution") {
  std::mt19937_64 g(5);
  std::normal_distribution<double> n(0.0, 1.0);
  int rejections = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(300), b(200);
    for (auto& v : a) v = n(g);
    for (auto& v : b) v = n(g);
    rejections += ks_two_sample(a, b).p_value < 0.05;
  }
  CHECK(rejections <= 20);
}

TEST_CASE("top5 mean and seed aggregation") {
  const std::vector<double> trace{0.8, 0.9, 0.85, 0.7, 0.95, 0.88, 0.6};
  CHECK(top5_mean(trace) == doctest::Approx(0.876).epsilon(1e-12));
  const std::vector<double> four{0.1, 0.2, 0.3, 0.4};
  CHECK_THROWS_AS(top5_mean(four), ValidationError);
  const MeanSE same = top5_mean_over_seeds({trace, trace, trace});
  CHECK(same.mean == doctest::Approx(0.876));
  CHECK(same.standard_error == 0.0);
  CHECK(same.n == 3);

  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  std::vector<std::vector<double>> traces(20);
  std::vector<double> per_seed;
  for (auto& t : traces) {
    t.resize(5 + g() % 20);
    for (auto& v : t) v = u(g);
    std::vector<double> s(t);
    std::sort(s.rbegin(), s.rend());
    per_seed.push_back((s[0] + s[1] + s[2] + s[3] + s[4]) / 5);
  }
  double m = 0;
  for (double v : per_seed) m += v / 20;
  double ss = 0;
  for (double v : per_seed) ss += (v - m) * (v - m);
  const MeanSE r = top5_mean_over_seeds(traces);
  CHECK(r.mean == doctest::Approx(m).epsilon(1e-12));
  CHECK(r.standard_error == doctest::Approx(std::sqrt(ss / 19) / std::sqrt(20.0)).epsilon(1e-12));
}

TEST_CASE("histogram and ecdf properties") {
  std::mt19937_64 g(9);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  std::vector<double> v(500);
  for (auto& x : v) x = u(g);
  v.push_back(1.0);
  v.push_back(0.0);
  const Histogram h = histogram(v, 20);
  CHECK(h.total() == v.size());
  CHECK(h.counts.size() == 20);
  CHECK(h.bin_left(0) == 0.0);
  CHECK(h.bin_right(19) == doctest::Approx(1.0));
  const Histogram h2 = histogram(std::vector<double>{0.5, 0.5, 0.9}, 20);
  const auto avg = average_normalized({h, h2});
  double sum = 0;
  for (double a : avg) sum += a;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  const auto e = ecdf(v);
  for (std::size_t i = 1; i < e.size(); ++i) {
    CHECK(e[i].first > e[i - 1].first);
    CHECK(e[i].second >= e[i - 1].second);
  }
  CHECK(e.back().second == 1.0);
  for (const auto& [x, f] : e) {
    const double le = static_cast<double>(std::count_if(v.begin(), v.end(), [x](double y) { return y <= x; }));
    CHECK(f == doctest::Approx(le / static_cast<double>(v.size())));
  }
}

TEST_CASE("spearman and paired test") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 100}, z{5, 4, 3, 2, 1};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0}, b{0.5, 1.0, 2.5, 3.0};
  const PairedTest t = paired_t_test_greater(a, b);
  // Differences 0.5, 1, 0.5, 1: mean 0.75, sd 0.288675, t = 0.75 / (0.288675 / 2) = 5.196152.
  CHECK(t.mean_difference == doctest::Approx(0.75));
  CHECK(t.t_statistic == doctest::Approx(5.196152).epsilon(1e-6));
  // One-sided tail of Student t with 3 df at 5.196152.
  CHECK(t.p_value == doctest::Approx(0.0069).epsilon(0.02));
  CHECK(paired_t_test_greater(b, a).p_value > 0.99);
}

TEST_CASE("agreement report strata") {
  std::vector<PatchRecord> recs(6);
  std::vector<ScoredRecord> scored;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].patch_id = "p" + std::to_string(i);
    recs[i].annotator_labels = {0, 0, static_cast<ClassId>(i < 3 ? 0 : 1)};
    scored.push_back({&recs[i], i < 3 ? 0.9 + 0.01 * i : 0.2 + 0.01 * i});
  }
  const AgreementReport r = agreement_report(scored, 10);
  CHECK(r.high.n == 3);
  CHECK(r.low.n == 3);
  CHECK(r.ks.statistic == 1.0);
  CHECK(r.high.histogram.total() == 3);

  std::vector<ScoredRecord> only_high(scored.begin(), scored.begin() + 3);
  try {
    agreement_report(only_high);
    FAIL("empty stratum accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("TWO_OF_THREE") != std::string::npos);
  }
}

TEST_CASE("blinded report percentages") {
  auto item = [](ImageGroup g, ClassId orig, std::vector<std::optional<ClassId>> labels) {
    static int k = 0;
    return BlindedItemLabels{"i" + std::to_string(k++), g, orig, std::move(labels)};
  };
  SUBCASE("17 split decisions out of 75") {
    std::vector<BlindedItemLabels> items;
    for (int i = 0; i < 75; ++i)
      items.push_back(item(ImageGroup::kGeneratedHard, 0, {0, 0, i < 17 ? ClassId{1} : ClassId{0}}));
    const auto rows = blinded_test_report(items);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].n == 75);
    CHECK(rows[0].pct_two_of_three == doctest::Approx(100.0 * 17 / 75));
    CHECK(rows[0].pct_three_of_three == doctest::Approx(100.0 * 58 / 75));
    CHECK(rows[0].pct_maintained == doctest::Approx(100.0));
  }
  SUBCASE("unanimous group") {
    std::vector<BlindedItemLabels> items;
    for (int i = 0; i < 5; ++i) items.push_back(item(ImageGroup::kOtherClass, 1, {1, 1, 1}));
    const auto rows = blinded_test_report(items);
    CHECK(rows[0].pct_three_of_three == 100.0);
    CHECK(rows[0].pct_maintained == 100.0);
  }
  SUBCASE("six image toy set") {
    // Votes for the original class: 3, 2, 1, 0, 2, 3.
    std::vector<BlindedItemLabels> items{
        item(ImageGroup::kRealHard, 0, {0, 0, 0}), item(ImageGroup::kRealHard, 0, {0, 1, 0}),
        item(ImageGroup::kRealHard, 0, {1, 1, 0}), item(ImageGroup::kRealHard, 0, {1, 1, 1}),
        item(ImageGroup::kRealHard, 1, {1, 0, 1}), item(ImageGroup::kRealHard, 1, {1, 1, 1})};
    const auto rows = blinded_test_report(items);
    CHECK(rows[0].n == 6);
    CHECK(rows[0].pct_three_of_three == doctest::Approx(100.0 * 2 / 6));
    CHECK(rows[0].pct_two_of_three == doctest::Approx(100.0 * 2 / 6));
    CHECK(rows[0].pct_maintained == doctest::Approx(100.0 * 4 / 6));
  }
  SUBCASE("missing labels are listed") {
    std::vector<BlindedItemLabels> items{item(ImageGroup::kRealEasy, 0, {0, std::nullopt, 0}),
                                         item(ImageGroup::kRealEasy, 0, {std::nullopt, 0, 0})};
    try {
      blinded_test_report(items);
      FAIL("incomplete labels accepted");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(items[0].item_id) != std::string::npos);
      CHECK(msg.find(items[1].item_id) != std::string::npos);
    }
  }
  for (auto g : kImageGroups) CHECK(parse_image_group(to_string(g)) == g);
}
