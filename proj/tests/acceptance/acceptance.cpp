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

// Acceptance suite: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "difftrans/dataset.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/metrics.hpp"
#include "difftrans/partition.hpp"
#include "difftrans/pipeline.hpp"
#include "difftrans/tsv.hpp"
#include "test_support.hpp"

using namespace difftrans;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(const std::string& name, const Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  if (!o.pass) ++g_failures;
}

template <class F>
void criterion(const std::string& name, F&& f) {
  try {
    report(name, f());
  } catch (const std::exception& e) {
    report(name, {false, std::string("error: ") + e.what()});
  }
}

std::vector<double> coarse_sample(std::mt19937_64& g, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(g() % 7) / 7.0;
  return v;
}

Outcome metric_oracles() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 g(2024);
  double worst_auc = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + g() % 29;
    const auto s = coarse_sample(g, n);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(g() % 2);
    y[0] = 0;
    y[1] = 1;
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] == 1 && y[j] == 0) {
          ++pairs;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    worst_auc = std::max(worst_auc, std::abs(metrics::auc(s, y) - wins / static_cast<double>(pairs)));
  }
  int ks_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = coarse_sample(g, 1 + g() % 20);
    const auto b = coarse_sample(g, 1 + g() % 20);
    auto cdf = [](const std::vector<double>& v, double x) {
      return static_cast<double>(std::count_if(v.begin(), v.end(), [x](double u) { return u <= x; })) /
             static_cast<double>(v.size());
    };
    double d = 0;
    for (const auto* v : {&a, &b})
      for (double x : *v) d = std::max(d, std::abs(cdf(a, x) - cdf(b, x)));
    ks_mismatch += metrics::ks_two_sample(a, b).statistic != d;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream os;
  os << "max |auc - pairs| " << worst_auc << ", ks mismatches " << ks_mismatch << "/200, " << secs << " s";
  return {worst_auc <= 1e-12 && ks_mismatch == 0 && secs < 60, os.str()};
}

Outcome ks_anchor() {
  const double p = metrics::ks_p_value(0.302, 860, 670);
  const double ratio = p / 1.5e-30;
  std::ostringstream os;
  os << "p " << p << ", ratio to 1.5e-30 " << ratio;
  return {ratio >= 1.0 / 3.0 && ratio <= 3.0, os.str()};
}

Outcome table1(const fs::path& dir) {
  const std::string path = (dir / "table1.tsv").string();
  save_manifest(testing::table1_manifest(), path);
  const StratumCounts c = count_strata(load_manifest(path));
  bool ok = true;
  std::ostringstream os;
  for (const auto& s : testing::kTable1) {
    const std::size_t got = c.at(s.split, s.agreement, s.cls);
    ok = ok && got == s.n;
    os << got << (&s == &testing::kTable1.back() ? "" : "/");
  }
  return {ok, "counts " + os.str()};
}

Outcome partition_guards() {
  std::mt19937_64 g(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto scores = [&](std::size_t n) {
    std::vector<scorer::ConfidenceScore> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].patch_id = "p" + std::to_string(i);
      out[i].own_class_confidence = std::floor(u(g) * 50) / 50;
      out[i].p_second_class = 1 - out[i].own_class_confidence;
    }
    return out;
  };
  partition::PartitionConfig cfg;
  cfg.phi = 6.25;
  bool guard = false;
  std::string guard_msg = "no violation";
  try {
    partition::partition(scores(1530), cfg);
  } catch (const MinTargetViolation& e) {
    guard = true;
    guard_msg = e.what();
  }
  int nested = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = scores(20 + g() % 400);
    double a = 1 + u(g) * 99, b = 1 + u(g) * 99;
    if (a > b) std::swap(a, b);
    partition::PartitionConfig ca, cb;
    ca.min_target = cb.min_target = 0;
    ca.phi = a;
    cb.phi = b;
    const auto pa = partition::partition(s, ca);
    const auto pb = partition::partition(s, cb);
    const std::set<std::string> hb(pb.hard_set.begin(), pb.hard_set.end());
    const std::set<std::string> ea(pa.easy_set.begin(), pa.easy_set.end());
    bool ok = std::all_of(pa.hard_set.begin(), pa.hard_set.end(), [&](const auto& id) { return hb.count(id); });
    ok = ok && std::all_of(pb.easy_set.begin(), pb.easy_set.end(), [&](const auto& id) { return ea.count(id); });
    nested += ok;
  }
  return {guard && nested == 100, guard_msg + "; nesting held in " + std::to_string(nested) + "/100"};
}

Outcome determinism(const std::string& config_path, const fs::path& dir) {
  pipeline::ExperimentConfig cfg = pipeline::load_config(config_path);
  cfg.deterministic = true;
  std::vector<fs::path> outs{dir / "det_a", dir / "det_b"};
  for (const auto& o : outs) {
    cfg.output_dir = o.string();
    pipeline::run_experiment(cfg);
  }
  std::size_t same = 0;
  for (const auto& f : pipeline::kReportFiles)
    same += tsv::read_file((outs[0] / "reports" / f).string()) == tsv::read_file((outs[1] / "reports" / f).string());
  return {same == pipeline::kReportFiles.size(),
          std::to_string(same) + "/" + std::to_string(pipeline::kReportFiles.size()) + " report files identical"};
}

// Desk-scale experiment for one dataset seed.
pipeline::ExperimentConfig desk_config(int seed, const std::vector<double>& phis, const fs::path& dir) {
  pipeline::ExperimentConfig c;
  synth::SynthConfig s;
  s.n_slides = 50;
  s.patches_per_slide = 40;
  s.render.side = 32;
  s.seed = static_cast<std::uint64_t>(seed);
  c.dataset.synth = s;
  c.scorer.epochs = 25;
  c.scorer.arch.base_width = 8;
  c.scorer.seed = static_cast<std::uint64_t>(seed);
  c.score_epoch = scorer::kInitialEpoch;
  c.partition.phis = phis;
  c.partition.min_target = 50;
  c.translator.epochs = 30;
  c.translator.batch_size = 4;
  c.translator.generator.base_width = 8;
  c.translator.discriminator.base_width = 8;
  c.translator.seed = static_cast<std::uint64_t>(seed);
  c.classifier = c.scorer;
  c.n_seeds = 1;
  c.variants = {"unmodified", "phi_25"};
  c.output_dir = (dir / ("seed_" + std::to_string(seed))).string();
  c.seed = static_cast<std::uint64_t>(seed);
  return c;
}

struct SeedResult {
  double ks_p = NAN;
  std::map<std::string, std::pair<double, double>> shift;  // phi -> (mean difference, p)
  std::map<std::string, double> generated_mean;
  std::map<std::string, std::pair<double, double>> auc;  // variant -> (low, all)
};

double cell(const tsv::Table& t, const tsv::Row& r, const char* col) { return std::stod(r.fields.at(t.column(col))); }

SeedResult read_seed(const fs::path& out, const ClassNames& classes) {
  SeedResult r;
  const auto ks = tsv::read_table((out / "reports" / "ks_agreement.tsv").string());
  for (const auto& row : ks.rows)
    if (row.fields[ks.column("class")] == classes[0]) r.ks_p = cell(ks, row, "p_value");
  const auto sh = tsv::read_table((out / "reports" / "difficulty_shift.tsv").string());
  for (const auto& row : sh.rows) {
    if (std::stoi(row.fields[sh.column("checkpoint_epoch")]) != scorer::kInitialEpoch) continue;
    const std::string phi = row.fields[sh.column("phi")];
    r.shift[phi] = {cell(sh, row, "mean_difference"), cell(sh, row, "p_value")};
    r.generated_mean[phi] = cell(sh, row, "mean_generated");
  }
  const auto auc = tsv::read_table((out / "reports" / "auc_table.tsv").string());
  for (const auto& row : auc.rows) r.auc[row.fields[auc.column("variant")]] = {cell(auc, row, "auc_low"), cell(auc, row, "auc_all")};
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("difftrans acceptance suite");
  std::string work_dir;
  std::string smoke_config = "configs/smoke.json";
  int seeds = 5;
  app.add_option("--work-dir", work_dir, "reuse this directory for experiment outputs");
  app.add_option("--smoke-config", smoke_config, "config for the determinism check");
  app.add_option("--seeds", seeds, "dataset seeds for the empirical criteria")->check(CLI::Range(1, 5));
  CLI11_PARSE(app, argc, argv);

  std::unique_ptr<testing::TempDir> tmp;
  fs::path dir;
  if (work_dir.empty()) {
    tmp = std::make_unique<testing::TempDir>("acceptance");
    dir = tmp->path();
  } else {
    dir = fs::absolute(work_dir);
    fs::create_directories(dir);
  }

  criterion("metric oracles", metric_oracles);
  criterion("ks p-value anchor", ks_anchor);
  criterion("table 1 derivation", [&] { return table1(dir); });
  criterion("partition guards", partition_guards);

  std::vector<SeedResult> results;
  std::string run_error;
  const auto start = std::chrono::steady_clock::now();
  try {
    for (int s = 0; s < seeds; ++s) {
      const std::vector<double> phis = s < 3 ? std::vector<double>{50.0, 25.0, 12.5} : std::vector<double>{25.0};
      const auto cfg = desk_config(s, phis, dir);
      pipeline::run_experiment(cfg, {[](const std::string& m) { std::cerr << m << "\n"; }});
      results.push_back(read_seed(cfg.output_dir, synth::SynthConfig{}.class_names));
      std::cerr << "seed " << s << " done after "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
    }
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const int n = static_cast<int>(results.size());
  auto empirical = [&](auto&& f) -> Outcome {
    if (!run_error.empty()) return {false, "experiment failed: " + run_error};
    return f();
  };

  criterion("confidence-agreement correlation", [&] {
    return empirical([&] {
      int hits = 0;
      std::ostringstream os;
      for (const auto& r : results) {
        hits += r.ks_p < 0.01;
        os << " " << r.ks_p;
      }
      return Outcome{hits >= std::min(4, n), std::to_string(hits) + "/" + std::to_string(n) +
                                                 " seeds reject at 0.01; p" + os.str()};
    });
  });

  criterion("difficulty shift", [&] {
    return empirical([&] {
      int hits = 0;
      std::ostringstream os;
      for (const auto& r : results) {
        const auto [diff, p] = r.shift.at("25");
        hits += diff > 0 && p < 0.05;
        os << " (" << diff << ", " << p << ")";
      }
      return Outcome{hits >= std::min(4, n), std::to_string(hits) + "/" + std::to_string(n) +
                                                 " seeds; (margin, p)" + os.str()};
    });
  });

  criterion("phi ordering", [&] {
    return empirical([&] {
      int inversions = 0;
      std::ostringstream os;
      for (int s = 0; s < std::min(3, n); ++s) {
        const auto& m = results[s].generated_mean;
        inversions += m.at("12.5") > m.at("25");
        inversions += m.at("25") > m.at("50");
        os << " [" << m.at("12.5") << ", " << m.at("25") << ", " << m.at("50") << "]";
      }
      return Outcome{inversions <= 1, std::to_string(inversions) + " inversions; means at 12.5/25/50" + os.str()};
    });
  });

  criterion("augmentation benefit", [&] {
    return empirical([&] {
      int low_wins = 0;
      double all_base = 0, all_aug = 0;
      std::ostringstream os;
      for (const auto& r : results) {
        const auto base = r.auc.at("unmodified"), aug = r.auc.at("phi_25");
        low_wins += aug.first >= base.first;
        all_base += base.second / n;
        all_aug += aug.second / n;
        os << " (" << base.first << " -> " << aug.first << ")";
      }
      const double drop = 100.0 * (all_base - all_aug);
      std::ostringstream d;
      d << low_wins << "/" << n << " seeds gain on low agreement" << os.str() << "; overall " << 100 * all_base
        << " -> " << 100 * all_aug;
      return Outcome{low_wins >= std::min(3, n) && drop <= 0.5, d.str()};
    });
  });

  criterion("pipeline determinism", [&] { return determinism(smoke_config, dir); });

  std::cout << "empirical runs took " << minutes << " min" << std::endl;
  return g_failures == 0 ? 0 : 1;
}
