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

#include "difftrans/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "difftrans/hashing.hpp"
#include "difftrans/metrics.hpp"
#include "difftrans/random.hpp"
#include "difftrans/tsv.hpp"

namespace fs = std::filesystem;

namespace difftrans::pipeline {

namespace {

const char* to_string(partition::ConfidenceMode m) {
  return m == partition::ConfidenceMode::kGoldClass ? "gold" : "predicted";
}

partition::ConfidenceMode parse_mode(const std::string& s) {
  if (s == "gold") return partition::ConfidenceMode::kGoldClass;
  if (s == "predicted") return partition::ConfidenceMode::kPredictedClass;
  throw ValidationError("unknown confidence mode '" + s + "'");
}

std::string fmt_or_nan(double v, int precision) { return std::isfinite(v) ? tsv::fmt(v, precision) : "nan"; }

std::string fmt_p(double p) {
  if (!std::isfinite(p)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", p);
  return buf;
}

}  // namespace

std::string phi_tag(double phi) {
  std::string s = tsv::fmt(phi, 6);
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

std::string resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  if (p.is_absolute()) return p.string();
  if (const char* root = std::getenv("DIFFTRANS_OUTPUT_ROOT"); root && *root) return (fs::path(root) / p).string();
  return p.string();
}

std::vector<std::string> ExperimentConfig::resolved_variants() const {
  if (!variants.empty()) return variants;
  std::vector<std::string> v{"unmodified"};
  if (!partition.phis.empty()) v.push_back("naive");
  for (double phi : partition.phis) v.push_back("phi_" + phi_tag(phi));
  return v;
}

void ExperimentConfig::validate() const {
  if (dataset.manifest.empty() == !dataset.synth.has_value())
    throw ValidationError("dataset needs exactly one of 'manifest' or 'synth'");
  scorer.validate();
  classifier.validate();
  translator.validate();
  if (score_epoch < 1 || score_epoch > scorer.epochs)
    throw ValidationError("score_epoch must lie in [1, scorer.epochs]");
  for (double phi : partition.phis)
    if (!(phi > 0.0 && phi <= 100.0)) throw ValidationError("phi values must lie in (0, 100]");
  if (!(partition.easy_fraction >= 0.0 && partition.easy_fraction <= 100.0))
    throw ValidationError("easy_fraction must lie in [0, 100]");
  if (n_seeds < 1) throw ValidationError("n_seeds must be at least 1");
  if (classifier.epochs < 5) throw ValidationError("classifier.epochs must be at least 5 for the top-5 AUC");
  if (histogram_bins < 1) throw ValidationError("histogram_bins must be at least 1");
  std::vector<std::string> allowed{"unmodified", "naive"};
  for (double phi : partition.phis) allowed.push_back("phi_" + phi_tag(phi));
  for (const auto& v : resolved_variants()) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
      throw ValidationError("unknown classifier variant '" + v + "'");
    if (v == "naive" && std::none_of(partition.phis.begin(), partition.phis.end(),
                                     [&](double p) { return phi_tag(p) == phi_tag(augment.naive_phi); }))
      throw ValidationError("naive_phi must be one of the phi values");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json dataset = nlohmann::json::object();
  if (!c.dataset.manifest.empty()) dataset["manifest"] = c.dataset.manifest;
  if (c.dataset.synth) dataset["synth"] = *c.dataset.synth;
  nlohmann::json augment = {{"naive_mode", augmenter::to_string(c.augment.naive_mode)},
                            {"naive_phi", c.augment.naive_phi}};
  augment["naive_count"] = c.augment.naive_count ? nlohmann::json(*c.augment.naive_count) : nlohmann::json();
  j = {{"dataset", dataset},
       {"scorer", c.scorer},
       {"score_epoch", c.score_epoch},
       {"partition",
        {{"phis", c.partition.phis},
         {"easy_fraction", c.partition.easy_fraction},
         {"min_target", c.partition.min_target},
         {"class", c.partition.class_name},
         {"mode", to_string(c.partition.mode)}}},
       {"translator", c.translator},
       {"augment", augment},
       {"classifier", c.classifier},
       {"n_seeds", c.n_seeds},
       {"variants", c.variants},
       {"histogram_bins", c.histogram_bins},
       {"output_dir", c.output_dir},
       {"deterministic", c.deterministic},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.manifest = d.value("manifest", std::string());
    if (d.contains("synth")) c.dataset.synth = d.at("synth").get<synth::SynthConfig>();
  }
  if (j.contains("scorer")) c.scorer = j.at("scorer").get<scorer::TrainConfig>();
  c.score_epoch = j.value("score_epoch", c.score_epoch);
  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    if (p.contains("phis")) c.partition.phis = p.at("phis").get<std::vector<double>>();
    c.partition.easy_fraction = p.value("easy_fraction", c.partition.easy_fraction);
    c.partition.min_target = p.value("min_target", c.partition.min_target);
    c.partition.class_name = p.value("class", c.partition.class_name);
    if (p.contains("mode")) c.partition.mode = parse_mode(p.at("mode").get<std::string>());
  }
  if (j.contains("translator")) c.translator = j.at("translator").get<translator::TranslatorConfig>();
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    if (a.contains("naive_mode")) c.augment.naive_mode = augmenter::parse_combine_mode(a.at("naive_mode").get<std::string>());
    if (a.contains("naive_count") && !a.at("naive_count").is_null())
      c.augment.naive_count = a.at("naive_count").get<std::size_t>();
    c.augment.naive_phi = a.value("naive_phi", c.augment.naive_phi);
  }
  if (j.contains("classifier")) c.classifier = j.at("classifier").get<scorer::TrainConfig>();
  c.n_seeds = j.value("n_seeds", c.n_seeds);
  if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<std::string>>();
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.seed = j.value("seed", c.seed);
}

std::string ExperimentConfig::hash() const {
  nlohmann::json j = *this;
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig c;
  try {
    c = nlohmann::json::parse(tsv::read_file(path)).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
  c.validate();
  return c;
}

std::vector<std::string> RunReport::executed() const {
  std::vector<std::string> out;
  for (const auto& s : stages)
    if (s.executed) out.push_back(s.name);
  return out;
}

namespace {

class Runner {
 public:
  Runner(const ExperimentConfig& config, const RunOptions& options)
      : cfg_(config), opt_(options), out_(resolve_output_dir(config.output_dir)) {
    report_.output_dir = out_.string();
    fs::create_directories(out_ / "markers");
  }

  RunReport run();

 private:
  using Body = std::function<void()>;

  void log(const std::string& msg) const {
    if (opt_.log) opt_.log(msg);
  }

  void stage(const std::string& name, const std::vector<std::string>& deps, const nlohmann::json& params,
             const Body& body) {
    std::string material = name + "\n" + params.dump() + "\n";
    bool dep_ran = false;
    for (const auto& d : deps) {
      const StageRecord& r = records_.at(d);
      material += r.key + "\n";
      dep_ran = dep_ran || r.executed;
    }
    StageRecord rec{name, sha256_hex(material), false};
    const fs::path marker = out_ / "markers" / (name + ".done");
    bool fresh = false;
    if (!dep_ran && fs::exists(marker)) {
      try {
        fresh = nlohmann::json::parse(tsv::read_file(marker.string())).value("key", "") == rec.key;
      } catch (const std::exception&) {
        fresh = false;
      }
    }
    if (fresh) {
      log("skip  " + name);
    } else {
      log("run   " + name);
      fs::remove(marker);
      try {
        body();
      } catch (const StageFailure&) {
        throw;
      } catch (const std::exception& e) {
        throw StageFailure(name, e.what());
      }
      tsv::write_file_atomic(marker.string(), nlohmann::json{{"stage", name}, {"key", rec.key}}.dump() + "\n");
      rec.executed = true;
    }
    records_[name] = rec;
    report_.stages.push_back(rec);
  }

  std::string manifest_path() const {
    return cfg_.dataset.synth ? (out_ / "data" / "manifest.tsv").string() : cfg_.dataset.manifest;
  }

  const DatasetManifest& manifest() {
    if (!manifest_) manifest_ = load_manifest(manifest_path());
    return *manifest_;
  }

  ClassId target_class() {
    if (cfg_.partition.class_name.empty()) return 0;
    auto id = manifest().class_id(cfg_.partition.class_name);
    if (!id) throw ValidationError("unknown class '" + cfg_.partition.class_name + "'");
    return *id;
  }

  std::vector<Image> load_images(const std::vector<std::string>& ids) {
    std::vector<Image> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const PatchRecord* r = manifest().find(id);
      if (!r) throw NotFoundError("patch '" + id + "' not in manifest");
      out.push_back(read_png(manifest().resolve(*r)));
    }
    return out;
  }

  fs::path checkpoint_path(int epoch) const {
    return out_ / "scorer" / ("epoch_" + std::to_string(epoch) + ".bundle");
  }

  std::vector<int> ladder_epochs() const {
    std::vector<int> e;
    for (int x : scorer::kEarlierEpochs) e.push_back(x);
    e.push_back(scorer::kInitialEpoch);
    for (int x : scorer::kLaterEpochs) e.push_back(x);
    e.push_back(cfg_.score_epoch);
    for (int x : cfg_.scorer.checkpoint_epochs) e.push_back(x);
    std::sort(e.begin(), e.end());
    e.erase(std::unique(e.begin(), e.end()), e.end());
    e.erase(std::remove_if(e.begin(), e.end(), [&](int x) { return x > cfg_.scorer.epochs; }), e.end());
    return e;
  }

  fs::path phi_dir(double phi) const { return out_ / ("phi_" + phi_tag(phi)); }

  void run_dataset();
  void run_scorer();
  void run_score();
  void run_partition(double phi);
  void run_translator(double phi);
  void run_generate(double phi);
  void run_naive();
  void run_classifier(const std::string& variant, int seed_index);
  void run_metrics(const std::vector<std::string>& variants);

  const ExperimentConfig& cfg_;
  const RunOptions& opt_;
  fs::path out_;
  RunReport report_;
  std::map<std::string, StageRecord> records_;
  std::optional<DatasetManifest> manifest_;
};

void Runner::run_dataset() {
  if (cfg_.dataset.synth) {
    manifest_.reset();
    synth::generate_dataset(*cfg_.dataset.synth, (out_ / "data").string());
    return;
  }
  const VerifyReport v = verify_manifest(manifest(), true);
  if (!v.ok) {
    std::string msg = "manifest verification failed";
    for (const auto& p : v.problems) msg += "; " + p;
    throw ValidationError(msg);
  }
}

void Runner::run_scorer() {
  scorer::TrainConfig tc = cfg_.scorer;
  tc.arch.image_side = manifest().image_side;
  tc.checkpoint_epochs = ladder_epochs();
  const scorer::LabeledSet train = scorer::load_split(manifest(), Split::kTrain);
  const scorer::LabeledSet test = scorer::load_split(manifest(), Split::kTest);
  const scorer::TrainResult r = scorer::train_classifier(train, test.size() ? &test : nullptr, tc, nullptr,
                                                         [&](const scorer::EpochLog& e) {
                                                           log("      scorer epoch " + std::to_string(e.epoch) +
                                                               " loss " + tsv::fmt(e.loss, 4));
                                                         });
  fs::create_directories(out_ / "scorer");
  for (const auto& ck : r.checkpoints) ck.save(checkpoint_path(ck.epoch).string());
  scorer::write_training_log(r.log, (out_ / "scorer" / "training_log.tsv").string());
}

void Runner::run_score() {
  const auto ck = scorer::ScorerCheckpoint::load(checkpoint_path(cfg_.score_epoch).string());
  const scorer::LabeledSet train = scorer::load_split(manifest(), Split::kTrain);
  fs::create_directories(out_ / "scores");
  scorer::save_scores(scorer::score(ck, train), manifest().class_names,
                      (out_ / "scores" / "train_scores.tsv").string());
}

void Runner::run_partition(double phi) {
  const auto scores =
      scorer::load_scores((out_ / "scores" / "train_scores.tsv").string(), manifest().class_names);
  const ClassId cls = target_class();
  std::vector<scorer::ConfidenceScore> own;
  for (const auto& s : scores)
    if (s.gold_class == cls) own.push_back(s);
  partition::PartitionConfig pc;
  pc.phi = phi;
  pc.easy_fraction = cfg_.partition.easy_fraction;
  pc.min_target = cfg_.partition.min_target;
  pc.mode = cfg_.partition.mode;
  partition::DomainPartition p = partition::partition(own, pc);
  p.class_id = cls;
  fs::create_directories(phi_dir(phi));
  partition::save_partition(p, manifest().class_names, (phi_dir(phi) / "partition.tsv").string());
}

void Runner::run_translator(double phi) {
  const auto p = partition::load_partition((phi_dir(phi) / "partition.tsv").string(), manifest().class_names);
  translator::TranslatorConfig tc = cfg_.translator;
  tc.seed = derive_seed(tc.seed, "phi:" + phi_tag(phi));
  tc.generator.image_side = manifest().image_side;
  tc.min_target = cfg_.partition.min_target;
  const auto r = translator::train_translator(load_images(p.easy_set), load_images(p.hard_set), tc, p.class_id, phi,
                                              [&](const translator::EpochTrace& e) {
                                                log("      translator phi " + phi_tag(phi) + " epoch " +
                                                    std::to_string(e.epoch) + " cycle " + tsv::fmt(e.cycle, 4));
                                              });
  for (const auto& w : r.warnings) log("      warning: " + w);
  translator::write_traces(r.traces, (phi_dir(phi) / "traces.tsv").string());
  if (r.aborted) {
    r.model.save((phi_dir(phi) / "translator_last_good.bundle").string());
    throw NonFiniteLoss(r.abort_reason + "; last good state saved");
  }
  r.model.save((phi_dir(phi) / "translator.bundle").string());
}

void Runner::run_generate(double phi) {
  const auto p = partition::load_partition((phi_dir(phi) / "partition.tsv").string(), manifest().class_names);
  const auto model = translator::TranslatorModel::load((phi_dir(phi) / "translator.bundle").string());
  auto generated = translator::translate(model, load_images(p.easy_set), p.easy_set);
  for (auto& g : generated) quantize(g.image);
  const auto ck = scorer::ScorerCheckpoint::load(checkpoint_path(cfg_.score_epoch).string());
  const augmenter::FilterResult f = augmenter::filter_label_maintained(generated, ck);
  const fs::path dir = phi_dir(phi) / "generated";
  std::vector<augmenter::AddedImage> all, kept;
  for (const auto& g : generated) all.push_back(augmenter::from_generated(g));
  for (const auto& g : f.kept) kept.push_back(augmenter::from_generated(g));
  auto all_set = augmenter::assemble(manifest(), std::move(all));
  augmenter::save_augmentation(all_set, dir.string(), "generated.tsv");
  auto kept_set = augmenter::assemble(manifest(), std::move(kept));
  augmenter::save_augmentation(kept_set, dir.string(), "augmentation.tsv");
  augmenter::save_filter_report(f, manifest().class_names, (phi_dir(phi) / "filter.tsv").string());
}

void Runner::run_naive() {
  const double phi = cfg_.augment.naive_phi;
  const auto p = partition::load_partition((phi_dir(phi) / "partition.tsv").string(), manifest().class_names);
  std::size_t n = 0;
  if (cfg_.augment.naive_count) {
    n = *cfg_.augment.naive_count;
  } else {
    n = augmenter::load_augmentation((phi_dir(phi) / "generated" / "augmentation.tsv").string(),
                                     manifest().class_names)
            .size();
  }
  auto naive = augmenter::naive_augment(load_images(p.easy_set), load_images(p.hard_set), n,
                                        derive_seed(cfg_.seed, "naive"), cfg_.augment.naive_mode);
  std::vector<augmenter::AddedImage> added;
  for (std::size_t i = 0; i < naive.size(); ++i) {
    const std::string easy_id = p.easy_set[naive[i].easy_index];
    const std::string hard_id = p.hard_set[naive[i].hard_index];
    added.push_back(augmenter::from_naive(std::move(naive[i]), i, p.class_id, easy_id, hard_id));
  }
  auto set = augmenter::assemble(manifest(), std::move(added));
  augmenter::save_augmentation(set, (out_ / "naive").string());
}

void Runner::run_classifier(const std::string& variant, int seed_index) {
  std::vector<augmenter::AddedImage> added;
  std::string base_dir;
  if (variant == "naive") {
    base_dir = (out_ / "naive").string();
  } else if (variant != "unmodified") {
    base_dir = (out_ / variant / "generated").string();
  }
  if (!base_dir.empty())
    added = augmenter::load_augmentation((fs::path(base_dir) / "augmentation.tsv").string(), manifest().class_names);
  augmenter::AugmentedDataset data = augmenter::assemble(manifest(), std::move(added));
  data.base_dir = base_dir;
  const scorer::LabeledSet train = augmenter::training_set(data);
  const scorer::LabeledSet test = scorer::load_split(manifest(), Split::kTest);
  scorer::TrainConfig tc = cfg_.classifier;
  tc.arch.image_side = manifest().image_side;
  tc.seed = derive_seed(cfg_.classifier.seed, static_cast<std::uint64_t>(seed_index));
  tc.checkpoint_epochs.clear();
  const auto r = scorer::train_classifier(train, &test, tc);
  const fs::path dir = out_ / "classifiers" / variant / ("seed_" + std::to_string(seed_index));
  fs::create_directories(dir);
  scorer::write_training_log(r.log, (dir / "log.tsv").string());
}

std::vector<scorer::EpochLog> read_log(const std::string& path) {
  const tsv::Table t = tsv::read_table(path);
  const int ep = t.column("epoch"), hi = t.column("auc_high"), lo = t.column("auc_low"), all = t.column("auc_all");
  if (ep < 0 || hi < 0 || lo < 0 || all < 0) throw ParseError(path, 0, "missing training log columns");
  std::vector<scorer::EpochLog> out;
  for (const auto& row : t.rows) {
    scorer::EpochLog e;
    e.epoch = std::stoi(row.fields[ep]);
    e.auc_high = std::stod(row.fields[hi]);
    e.auc_low = std::stod(row.fields[lo]);
    e.auc_all = std::stod(row.fields[all]);
    out.push_back(e);
  }
  return out;
}

std::string pct_cell(const metrics::MeanSE& m) {
  if (!std::isfinite(m.mean)) return "n/a";
  return tsv::fmt(100.0 * m.mean, 1) + " ± " + tsv::fmt(100.0 * m.standard_error, 1);
}

void Runner::run_metrics(const std::vector<std::string>& variants) {
  const fs::path rep = out_ / "reports";
  fs::create_directories(rep);
  const DatasetManifest& m = manifest();

  // Stratified AUC, mean of top-5 epochs per seed, aggregated over seeds.
  tsv::Table auc;
  auc.header = {"variant", "n_seeds", "auc_high", "se_high", "auc_low", "se_low", "auc_all", "se_all"};
  std::ostringstream txt;
  txt << "Performance (% AUC ± standard error)\n";
  txt << "variant\thigh agreement\tlow agreement\tall\n";
  for (const auto& v : variants) {
    std::vector<std::vector<double>> hi, lo, all;
    for (int s = 0; s < cfg_.n_seeds; ++s) {
      const auto log = read_log((out_ / "classifiers" / v / ("seed_" + std::to_string(s)) / "log.tsv").string());
      std::vector<double> h, l, a;
      for (const auto& e : log) {
        h.push_back(e.auc_high);
        l.push_back(e.auc_low);
        a.push_back(e.auc_all);
      }
      hi.push_back(h);
      lo.push_back(l);
      all.push_back(a);
    }
    const auto mh = metrics::top5_mean_over_seeds(hi);
    const auto ml = metrics::top5_mean_over_seeds(lo);
    const auto ma = metrics::top5_mean_over_seeds(all);
    auc.rows.push_back({0,
                        {v, std::to_string(cfg_.n_seeds), fmt_or_nan(mh.mean, 6), fmt_or_nan(mh.standard_error, 6),
                         fmt_or_nan(ml.mean, 6), fmt_or_nan(ml.standard_error, 6), fmt_or_nan(ma.mean, 6),
                         fmt_or_nan(ma.standard_error, 6)}});
    txt << v << "\t" << pct_cell(mh) << "\t" << pct_cell(ml) << "\t" << pct_cell(ma) << "\n";
  }
  tsv::write_table((rep / "auc_table.tsv").string(), auc);
  tsv::write_file_atomic((rep / "auc_table.txt").string(), txt.str());

  // Confidence by annotator agreement, per class, on the TRAIN split.
  const auto scores = scorer::load_scores((out_ / "scores" / "train_scores.tsv").string(), m.class_names);
  tsv::Table ks, hist;
  ks.header = {"class", "n_high", "n_low", "mean_high", "mean_low", "median_high", "median_low", "ks_d", "p_value"};
  hist.header = {"class", "agreement", "bin_left", "bin_right", "count"};
  for (ClassId c = 0; c < 2; ++c) {
    std::vector<metrics::ScoredRecord> scored;
    for (const auto& s : scores) {
      if (s.gold_class != c) continue;
      const PatchRecord* r = m.find(s.patch_id);
      if (!r) throw NotFoundError("scored patch '" + s.patch_id + "' not in manifest");
      scored.push_back({r, s.own_class_confidence});
    }
    std::size_t n_high = 0;
    for (const auto& s : scored) n_high += s.record->agreement() == Agreement::kThreeOfThree;
    if (n_high == 0 || n_high == scored.size()) {
      log("      class " + m.class_names[c] + " lacks an agreement stratum; KS skipped");
      continue;
    }
    const auto r = metrics::agreement_report(scored, cfg_.histogram_bins);
    ks.rows.push_back({0,
                       {m.class_names[c], std::to_string(r.high.n), std::to_string(r.low.n), tsv::fmt(r.high.mean, 6),
                        tsv::fmt(r.low.mean, 6), tsv::fmt(r.high.median, 6), tsv::fmt(r.low.median, 6),
                        tsv::fmt(r.ks.statistic, 6), fmt_p(r.ks.p_value)}});
    for (const auto* s : {&r.high, &r.low})
      for (std::size_t b = 0; b < s->histogram.counts.size(); ++b)
        hist.rows.push_back({0,
                             {m.class_names[c], s == &r.high ? "HIGH" : "LOW", tsv::fmt(s->histogram.bin_left(b), 4),
                              tsv::fmt(s->histogram.bin_right(b), 4), std::to_string(s->histogram.counts[b])}});
  }
  tsv::write_table((rep / "ks_agreement.tsv").string(), ks);
  tsv::write_table((rep / "histograms.tsv").string(), hist);

  // Machine label maintenance and difficulty shift across the checkpoint ladder.
  tsv::Table maint, shift;
  maint.header = {"phi", "total", "kept", "rate"};
  shift.header = {"phi", "checkpoint_epoch", "n", "mean_source", "mean_generated", "mean_difference", "t", "p_value"};
  std::vector<std::pair<int, scorer::Classifier>> ladder;
  for (int e : ladder_epochs())
    if (fs::exists(checkpoint_path(e))) ladder.emplace_back(e, scorer::Classifier(scorer::ScorerCheckpoint::load(checkpoint_path(e).string())));
  for (double phi : cfg_.partition.phis) {
    const tsv::Table f = tsv::read_table((phi_dir(phi) / "filter.tsv").string());
    maint.rows.push_back({0,
                          {phi_tag(phi), *f.meta_value("total"), *f.meta_value("kept"), *f.meta_value("maintained_rate")}});
    const auto gen = augmenter::load_augmentation((phi_dir(phi) / "generated" / "generated.tsv").string(), m.class_names);
    std::vector<Image> gen_images, src_images;
    std::vector<std::string> src_ids;
    for (const auto& g : gen) {
      gen_images.push_back(read_png((phi_dir(phi) / "generated" / g.image_ref).string()));
      src_ids.push_back(g.source_ids.front());
    }
    src_images = load_images(src_ids);
    const ClassId cls = gen.empty() ? 0 : gen.front().class_id;
    for (const auto& [epoch, clf] : ladder) {
      const auto pg = clf.predict(gen_images);
      const auto ps = clf.predict(src_images);
      std::vector<double> cs, cg;
      for (std::size_t i = 0; i < pg.size(); ++i) {
        cs.push_back(cls == 1 ? ps[i] : 1.0 - ps[i]);
        cg.push_back(cls == 1 ? pg[i] : 1.0 - pg[i]);
      }
      const auto t = metrics::paired_t_test_greater(cs, cg);
      shift.rows.push_back({0,
                            {phi_tag(phi), std::to_string(epoch), std::to_string(t.n), tsv::fmt(metrics::mean_se(cs).mean, 6),
                             tsv::fmt(metrics::mean_se(cg).mean, 6), tsv::fmt(t.mean_difference, 6),
                             fmt_or_nan(t.t_statistic, 4), fmt_p(t.p_value)}});
    }
  }
  tsv::write_table((rep / "maintained_label.tsv").string(), maint);
  tsv::write_table((rep / "difficulty_shift.tsv").string(), shift);

  tsv::Table keys;
  keys.meta = {{"config_hash", cfg_.hash()}};
  keys.header = {"stage", "key"};
  for (const auto& s : report_.stages) keys.rows.push_back({0, {s.name, s.key}});
  tsv::write_table((rep / "stage_keys.tsv").string(), keys);
}

RunReport Runner::run() {
  const auto variants = cfg_.resolved_variants();
  auto cfg_json = [](const auto& v) { return nlohmann::json(v); };
  nlohmann::json dataset_params;
  if (cfg_.dataset.synth) {
    dataset_params = {{"synth", *cfg_.dataset.synth}};
  } else {
    dataset_params = {{"manifest", cfg_.dataset.manifest}, {"sha256", sha256_file(cfg_.dataset.manifest)}};
  }
  stage("dataset", {}, dataset_params, [&] { run_dataset(); });
  stage("scorer", {"dataset"}, {{"scorer", cfg_json(cfg_.scorer)}, {"ladder", ladder_epochs()}},
        [&] { run_scorer(); });
  stage("score", {"scorer"}, {{"score_epoch", cfg_.score_epoch}}, [&] { run_score(); });
  const nlohmann::json part_params = {{"easy_fraction", cfg_.partition.easy_fraction},
                                      {"min_target", cfg_.partition.min_target},
                                      {"class", cfg_.partition.class_name},
                                      {"mode", to_string(cfg_.partition.mode)}};
  std::vector<std::string> metric_deps{"score"};
  for (double phi : cfg_.partition.phis) {
    const std::string tag = phi_tag(phi);
    stage("partition_" + tag, {"score"}, {{"phi", phi}, {"settings", part_params}}, [&] { run_partition(phi); });
    stage("translator_" + tag, {"partition_" + tag}, {{"translator", cfg_json(cfg_.translator)}},
          [&] { run_translator(phi); });
    stage("generate_" + tag, {"translator_" + tag}, {{"score_epoch", cfg_.score_epoch}},
          [&] { run_generate(phi); });
    metric_deps.push_back("generate_" + tag);
  }
  const bool want_naive = std::find(variants.begin(), variants.end(), "naive") != variants.end();
  if (want_naive) {
    const std::string tag = phi_tag(cfg_.augment.naive_phi);
    nlohmann::json augment = {{"mode", augmenter::to_string(cfg_.augment.naive_mode)}, {"seed", cfg_.seed}};
    augment["count"] = cfg_.augment.naive_count ? nlohmann::json(*cfg_.augment.naive_count) : nlohmann::json();
    stage("naive", {"partition_" + tag, "generate_" + tag}, augment, [&] { run_naive(); });
  }
  for (const auto& v : variants) {
    std::vector<std::string> deps{"dataset"};
    if (v == "naive") {
      deps.push_back("naive");
    } else if (v != "unmodified") {
      deps.push_back("generate_" + v.substr(4));
    }
    for (int s = 0; s < cfg_.n_seeds; ++s) {
      const std::string name = "classifier_" + v + "_seed" + std::to_string(s);
      stage(name, deps, {{"classifier", cfg_json(cfg_.classifier)}, {"seed_index", s}},
            [&] { run_classifier(v, s); });
      metric_deps.push_back(name);
    }
  }
  stage("metrics", metric_deps, {{"bins", cfg_.histogram_bins}, {"variants", variants}, {"n_seeds", cfg_.n_seeds}},
        [&] { run_metrics(variants); });
  return report_;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  Runner runner(config, options);
  return runner.run();
}

}  // namespace difftrans::pipeline
