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

#include <cmath>
#include <map>

#include "difftrans/errors.hpp"
#include "difftrans/synth.hpp"
#include "difftrans/tsv.hpp"
#include "test_support.hpp"

using namespace difftrans;
using namespace difftrans::synth;

namespace {

SynthConfig small_config(int slides, int per_slide, int side = 8) {
  SynthConfig c;
  c.n_slides = slides;
  c.patches_per_slide = per_slide;
  c.render.side = side;
  return c;
}

// Simpson's rule over [lo, hi] of P(unanimous | t) for independent flips.
double expected_agreement(const ErrorCurve& curve, double lo, double hi) {
  const int n = 2000;
  const double step = (hi - lo) / n;
  double s = 0;
  for (int i = 0; i <= n; ++i) {
    const double t = lo + i * step;
    const double e = curve.floor + (curve.ceiling - curve.floor) * (1 - t) * (1 - t);
    const double f = (1 - e) * (1 - e) * (1 - e) + e * e * e;
    s += f * (i == 0 || i == n ? 1 : i % 2 ? 4 : 2);
  }
  return s * step / 3 / (hi - lo);
}

double unanimous_fraction(const DatasetManifest& m) {
  std::size_t k = 0;
  for (const auto& r : m.records) k += r.agreement() == Agreement::kThreeOfThree;
  return static_cast<double>(k) / static_cast<double>(m.records.size());
}

}  // namespace

TEST_CASE("rendering is deterministic and in range") {
  RenderParams p;
  p.side = 16;
  const Image a = render_patch(0, 0.7, 42, p);
  const Image b = render_patch(0, 0.7, 42, p);
  CHECK(encode_png(a) == encode_png(b));
  CHECK(encode_png(a) != encode_png(render_patch(0, 0.7, 43, p)));
  CHECK(encode_png(a) != encode_png(render_patch(1, 0.7, 42, p)));
  for (float v : a.data) {
    CHECK(v >= 0.0F);
    CHECK(v <= 1.0F);
  }
  CHECK_THROWS_AS(render_patch(2, 0.5, 0, p), ValidationError);
  CHECK_THROWS_AS(render_patch(0, 1.5, 0, p), ValidationError);
}

TEST_CASE("at zero intensity the classes share a texture distribution") {
  RenderParams p;
  p.side = 16;
  double m0 = 0, m1 = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    m0 += render_patch(0, 0.0, s, p).mean() / 200;
    m1 += render_patch(1, 0.0, s, p).mean() / 200;
  }
  CHECK(std::abs(m0 - m1) < 1e-6);
}

TEST_CASE("error curve and intensity parsing") {
  ErrorCurve c;
  CHECK(c(1.0) == doctest::Approx(c.floor));
  CHECK(c(0.0) == doctest::Approx(c.ceiling));
  for (double t = 0; t < 1; t += 0.05) CHECK(c(t + 0.05) <= c(t));
  ErrorCurve bad;
  bad.ceiling = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK(agreement_probability(0.0) == 1.0);
  CHECK(agreement_probability(0.5) == doctest::Approx(0.25));

  const auto u = IntensityDistribution::parse("uniform:0.2,0.9");
  CHECK(u.lo == 0.2);
  CHECK(u.hi == 0.9);
  CHECK(IntensityDistribution::parse(u.to_string()).hi == 0.9);
  CHECK(IntensityDistribution::parse("point:1").kind == IntensityDistribution::Kind::kPoint);
  CHECK_THROWS_AS(IntensityDistribution::parse("gauss:0,1"), ValidationError);
  CHECK_THROWS_AS(IntensityDistribution::parse("uniform:0.5,0.1"), ValidationError);
  CHECK_THROWS_AS(IntensityDistribution::parse("point:x"), ValidationError);
}

TEST_CASE("config json round trip") {
  SynthConfig c = small_config(5, 7, 24);
  c.intensity = IntensityDistribution::parse("uniform:0.1,0.8");
  c.error_curve.power = 3;
  c.seed = 99;
  const nlohmann::json j = c;
  const SynthConfig back = j.get<SynthConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.render.side == 24);
  CHECK(back.seed == 99);
}

TEST_CASE("point mass at full intensity is nearly unanimous") {
  testing::TempDir dir("synth_point");
  SynthConfig c = small_config(10, 30);
  c.intensity = IntensityDistribution::parse("point:1");
  const SynthResult r = generate_dataset(c, dir.str());
  const double expected = std::pow(1 - c.error_curve.floor, 3) + std::pow(c.error_curve.floor, 3);
  CHECK(unanimous_fraction(r.manifest) > expected - 0.04);
}

TEST_CASE("generated dataset is deterministic and self-consistent") {
  testing::TempDir a("synth_a"), b("synth_b");
  const SynthConfig c = small_config(6, 10);
  const SynthResult ra = generate_dataset(c, a.str());
  const SynthResult rb = generate_dataset(c, b.str());
  CHECK(tsv::read_file(ra.manifest_path) == tsv::read_file(rb.manifest_path));
  CHECK(tsv::read_file(ra.truth_path) == tsv::read_file(rb.truth_path));
  for (const auto& rec : ra.manifest.records)
    CHECK(tsv::read_file(a.str(rec.image_ref)) == tsv::read_file(b.str(rec.image_ref)));

  const DatasetManifest loaded = load_manifest(ra.manifest_path);
  CHECK(loaded == ra.manifest);
  CHECK(verify_manifest(loaded, true).ok);
  CHECK(load_truth(ra.truth_path).size() == 60);
  // The manifest never carries the intensity.
  CHECK(tsv::read_file(ra.manifest_path).find("\tt\t") == std::string::npos);

  SynthConfig other = c;
  other.seed = 1;
  testing::TempDir d("synth_c");
  CHECK(tsv::read_file(generate_dataset(other, d.str()).truth_path) != tsv::read_file(ra.truth_path));
}

TEST_CASE("invalid synth configurations are rejected") {
  testing::TempDir dir("synth_bad");
  CHECK_THROWS_AS(generate_dataset(small_config(1, 10), dir.str()), ValidationError);
  SynthConfig c = small_config(3, 3);
  c.class_balance = 1.0;
  CHECK_THROWS_AS(generate_dataset(c, dir.str()), ValidationError);
  CHECK_THROWS_AS(generate_dataset(small_config(3, 3), "/proc/forbidden/out"), IoError);
}

TEST_CASE("empirical agreement matches the flip model and rises with intensity") {
  testing::TempDir dir("synth_uniform");
  const SynthConfig c = small_config(50, 60, 4);
  const SynthResult r = generate_dataset(c, dir.str());
  const double n = static_cast<double>(r.manifest.records.size());
  const double p = expected_agreement(c.error_curve, 0.0, 1.0);
  CHECK(std::abs(unanimous_fraction(r.manifest) - p) < 4 * std::sqrt(p * (1 - p) / n));

  std::map<std::string, double> t_of;
  for (const auto& tr : r.truth) t_of[tr.patch_id] = tr.t;
  std::array<double, 5> agree{}, count{};
  std::size_t wrong_gold = 0;
  for (std::size_t i = 0; i < r.manifest.records.size(); ++i) {
    const auto& rec = r.manifest.records[i];
    const int bin = std::min(4, static_cast<int>(t_of.at(rec.patch_id) * 5));
    agree[bin] += rec.agreement() == Agreement::kThreeOfThree;
    count[bin] += 1;
    wrong_gold += rec.gold_label() != r.truth[i].true_class;
  }
  for (int b = 0; b < 5; ++b) {
    const double expect = expected_agreement(c.error_curve, b / 5.0, (b + 1) / 5.0);
    CHECK(std::abs(agree[b] / count[b] - expect) < 4 * std::sqrt(expect * (1 - expect) / count[b]));
    if (b > 0) CHECK(agree[b] / count[b] > agree[b - 1] / count[b - 1] - 0.02);
  }
  CHECK(wrong_gold > 0);
  std::size_t class0 = 0;
  for (const auto& tr : r.truth) class0 += tr.true_class == 0;
  CHECK(std::abs(class0 / n - c.class_balance) < 4 * std::sqrt(0.21 / n));
}
