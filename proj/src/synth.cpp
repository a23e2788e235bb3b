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

#include "difftrans/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "difftrans/errors.hpp"
#include "difftrans/random.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::synth {

namespace fs = std::filesystem;

namespace {

// Motif channel weights: the motif mostly darkens red/green, like a
// hematoxylin-stained structure.
constexpr std::array<double, 3> kMotifWeights{0.9, 1.0, 0.6};
constexpr int kCoarseGrid = 5;

double frac(double x) { return x - std::floor(x); }

}  // namespace

Image render_patch(ClassId cls, double t, std::uint64_t seed, const RenderParams& params) {
  if (cls > 1) throw ValidationError("class id must be 0 or 1");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("intensity t must lie in [0, 1]");
  const int side = params.side;
  Rng rng(seed);
  const double scale = side / 32.0;

  // Low-frequency texture: bilinear upsampling of a coarse random grid.
  std::array<double, kCoarseGrid * kCoarseGrid> coarse{};
  for (double& v : coarse) v = uniform(rng, -1.0, 1.0);

  const double theta = uniform(rng, 0.0, M_PI);
  const double period = scale * uniform(rng, 6.0, 8.0);
  const double phase_u = uniform01(rng);
  const double phase_v = uniform01(rng);
  const double amplitude = t * params.max_contrast;
  const double ct = std::cos(theta), st = std::sin(theta);

  Image img(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double gx = static_cast<double>(x) / (side - 1) * (kCoarseGrid - 1);
      const double gy = static_cast<double>(y) / (side - 1) * (kCoarseGrid - 1);
      const int x0 = std::min(static_cast<int>(gx), kCoarseGrid - 2);
      const int y0 = std::min(static_cast<int>(gy), kCoarseGrid - 2);
      const double fx = gx - x0, fy = gy - y0;
      auto g = [&](int yy, int xx) { return coarse[yy * kCoarseGrid + xx]; };
      const double low = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) +
                         fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));

      const double u = x * ct + y * st;
      const double v = -x * st + y * ct;
      double motif;
      if (cls == 0) {
        motif = std::cos(2 * M_PI * (u / period + phase_u)) * std::cos(2 * M_PI * (v / period + phase_v));
      } else {
        motif = 2.0 * frac(u / period + phase_u) - 1.0;
      }
      for (int c = 0; c < 3; ++c) {
        const double base = params.stain[c] * (1.0 - 0.15 * low);
        const double value = base - amplitude * motif * kMotifWeights[c] + normal(rng, 0.0, params.noise_level);
        img.at(c, y, x) = static_cast<float>(std::clamp(value, 0.0, 1.0));
      }
    }
  }
  quantize(img);
  return img;
}

double ErrorCurve::operator()(double t) const {
  return floor + (ceiling - floor) * std::pow(1.0 - std::clamp(t, 0.0, 1.0), power);
}

void ErrorCurve::validate() const {
  if (!(floor >= 0.0 && floor <= ceiling && ceiling < 0.5 && power > 0.0))
    throw ValidationError("error curve needs 0 <= floor <= ceiling < 0.5 and power > 0");
}

double agreement_probability(double e) { return std::pow(1.0 - e, 3) + std::pow(e, 3); }

IntensityDistribution IntensityDistribution::parse(const std::string& spec) {
  IntensityDistribution d;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const auto args = colon == std::string::npos ? std::vector<std::string>{}
                                               : tsv::split(spec.substr(colon + 1), ',');
  try {
    if (kind == "uniform") {
      d.kind = Kind::kUniform;
      if (args.size() == 2) {
        d.lo = std::stod(args[0]);
        d.hi = std::stod(args[1]);
      } else if (!args.empty()) {
        throw ValidationError("uniform takes two bounds");
      }
    } else if (kind == "point") {
      if (args.size() != 1) throw ValidationError("point takes one value");
      d.kind = Kind::kPoint;
      d.lo = d.hi = std::stod(args[0]);
    } else {
      throw ValidationError("unknown intensity distribution '" + kind + "'");
    }
  } catch (const std::invalid_argument&) {
    throw ValidationError("malformed intensity distribution '" + spec + "'");
  }
  if (!(d.lo >= 0.0 && d.hi <= 1.0 && d.lo <= d.hi))
    throw ValidationError("intensity bounds must satisfy 0 <= lo <= hi <= 1");
  return d;
}

std::string IntensityDistribution::to_string() const {
  if (kind == Kind::kPoint) return "point:" + tsv::fmt(lo, 4);
  return "uniform:" + tsv::fmt(lo, 4) + "," + tsv::fmt(hi, 4);
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"n_slides", c.n_slides},
       {"patches_per_slide", c.patches_per_slide},
       {"class_balance", c.class_balance},
       {"intensity", c.intensity.to_string()},
       {"error_curve", {{"floor", c.error_curve.floor}, {"ceiling", c.error_curve.ceiling}, {"power", c.error_curve.power}}},
       {"render",
        {{"side", c.render.side},
         {"noise_level", c.render.noise_level},
         {"max_contrast", c.render.max_contrast},
         {"stain", c.render.stain}}},
       {"train_fraction", c.train_fraction},
       {"class_names", c.class_names},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.n_slides = j.value("n_slides", c.n_slides);
  c.patches_per_slide = j.value("patches_per_slide", c.patches_per_slide);
  c.class_balance = j.value("class_balance", c.class_balance);
  if (j.contains("intensity")) c.intensity = IntensityDistribution::parse(j.at("intensity").get<std::string>());
  if (j.contains("error_curve")) {
    const auto& e = j.at("error_curve");
    c.error_curve.floor = e.value("floor", c.error_curve.floor);
    c.error_curve.ceiling = e.value("ceiling", c.error_curve.ceiling);
    c.error_curve.power = e.value("power", c.error_curve.power);
  }
  if (j.contains("render")) {
    const auto& r = j.at("render");
    c.render.side = r.value("side", c.render.side);
    c.render.noise_level = r.value("noise_level", c.render.noise_level);
    c.render.max_contrast = r.value("max_contrast", c.render.max_contrast);
    if (r.contains("stain")) c.render.stain = r.at("stain").get<std::array<double, 3>>();
  }
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  if (j.contains("class_names")) c.class_names = j.at("class_names").get<ClassNames>();
  c.seed = j.value("seed", c.seed);
}

SynthResult generate_dataset(const SynthConfig& config, const std::string& out_dir) {
  if (config.n_slides < 2) throw ValidationError("n_slides must be at least 2");
  if (config.patches_per_slide < 1) throw ValidationError("patches_per_slide must be positive");
  if (!(config.class_balance > 0.0 && config.class_balance < 1.0))
    throw ValidationError("class_balance must lie in (0, 1)");
  config.error_curve.validate();

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  SynthResult res;
  res.manifest.class_names = config.class_names;
  res.manifest.image_side = config.render.side;
  res.manifest.base_dir = out_dir;

  const int width = std::max(3, static_cast<int>(std::to_string(config.n_slides).size()));
  for (int s = 0; s < config.n_slides; ++s) {
    std::ostringstream sid;
    sid << "slide" << std::setw(width) << std::setfill('0') << s;
    Rng slide_rng(derive_seed(config.seed, "slide:" + sid.str()));
    RenderParams rp = config.render;
    for (double& c : rp.stain) c = std::clamp(c + uniform(slide_rng, -0.05, 0.05), 0.0, 1.0);

    for (int p = 0; p < config.patches_per_slide; ++p) {
      std::ostringstream pid;
      pid << sid.str() << "_p" << std::setw(3) << std::setfill('0') << p;
      Rng rng(derive_seed(config.seed, "patch:" + pid.str()));
      const ClassId cls = uniform01(rng) < config.class_balance ? 0 : 1;
      const auto& dist = config.intensity;
      const double t = dist.kind == IntensityDistribution::Kind::kPoint ? dist.lo
                                                                        : uniform(rng, dist.lo, dist.hi);
      const std::uint64_t texture_seed = rng();
      const double e = config.error_curve(t);
      PatchRecord rec;
      rec.patch_id = pid.str();
      rec.slide_id = sid.str();
      rec.image_ref = "images/" + rec.patch_id + ".png";
      for (auto& label : rec.annotator_labels) label = uniform01(rng) < e ? static_cast<ClassId>(1 - cls) : cls;

      write_png((fs::path(out_dir) / rec.image_ref).string(), render_patch(cls, t, texture_seed, rp));
      res.truth.push_back({rec.patch_id, cls, t});
      res.manifest.records.push_back(std::move(rec));
    }
  }
  res.manifest = split_by_slide(res.manifest, config.train_fraction, derive_seed(config.seed, "split"));

  res.manifest_path = (fs::path(out_dir) / "manifest.tsv").string();
  res.truth_path = (fs::path(out_dir) / "truth.tsv").string();
  save_manifest(res.manifest, res.manifest_path);
  tsv::Table truth;
  truth.header = {"patch_id", "t"};
  for (const auto& tr : res.truth) truth.rows.push_back({0, {tr.patch_id, tsv::fmt(tr.t, 9)}});
  tsv::write_table(res.truth_path, truth);
  return res;
}

std::vector<std::pair<std::string, double>> load_truth(const std::string& path) {
  const tsv::Table t = tsv::read_table(path);
  const int id = t.column("patch_id"), tc = t.column("t");
  if (id < 0 || tc < 0) throw ParseError(path, 0, "truth file needs patch_id and t columns");
  std::vector<std::pair<std::string, double>> out;
  for (const auto& row : t.rows) out.emplace_back(row.fields[id], std::stod(row.fields[tc]));
  return out;
}

}  // namespace difftrans::synth
