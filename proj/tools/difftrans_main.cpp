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

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "difftrans/annotation/server.hpp"
#include "difftrans/annotation/store.hpp"
#include "difftrans/augmenter.hpp"
#include "difftrans/dataset.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/metrics.hpp"
#include "difftrans/partition.hpp"
#include "difftrans/pipeline.hpp"
#include "difftrans/scorer.hpp"
#include "difftrans/synth.hpp"
#include "difftrans/translator.hpp"
#include "difftrans/tsv.hpp"

namespace fs = std::filesystem;
using namespace difftrans;
using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool quiet = false;
};

Globals g;

void note(const std::string& msg) {
  if (!g.quiet) std::cerr << msg << "\n";
}

std::string out_path(const std::string& p) { return pipeline::resolve_output_dir(p); }

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

template <typename T>
T read_json_config(const std::string& path) {
  if (path.empty()) return T{};
  try {
    return json::parse(tsv::read_file(path)).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(path, 0, e.what());
  }
}

ClassId class_arg(const DatasetManifest& m, const std::string& name) {
  if (name.empty()) return 0;
  auto id = m.class_id(name);
  if (!id) throw ValidationError("unknown class '" + name + "'");
  return *id;
}

std::vector<Image> load_by_ids(const DatasetManifest& m, const std::vector<std::string>& ids) {
  std::vector<Image> out;
  for (const auto& id : ids) {
    const PatchRecord* r = m.find(id);
    if (!r) throw NotFoundError("patch '" + id + "' not in manifest");
    out.push_back(read_png(m.resolve(*r)));
  }
  return out;
}

struct TrainFlags {
  std::string config;
  std::optional<int> epochs, batch_size, width;
  bool no_jitter = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--train-config", config, "JSON training config");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "minibatch size");
    cmd->add_option("--width", width, "base channel width");
    cmd->add_flag("--no-jitter", no_jitter, "disable color jitter");
  }

  scorer::TrainConfig resolve(int image_side) const {
    auto c = read_json_config<scorer::TrainConfig>(config);
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (width) c.arch.base_width = *width;
    if (no_jitter) c.jitter.enabled = false;
    if (g.seed) c.seed = *g.seed;
    c.arch.image_side = image_side;
    c.validate();
    return c;
  }
};

void print_strata(const DatasetManifest& m) {
  const StratumCounts s = count_strata(m);
  std::cout << "split\tagreement\t" << m.class_names[0] << "\t" << m.class_names[1] << "\n";
  for (Split sp : {Split::kTrain, Split::kTest})
    for (Agreement a : {Agreement::kThreeOfThree, Agreement::kTwoOfThree})
      std::cout << to_string(sp) << "\t" << (a == Agreement::kThreeOfThree ? "3/3" : "2/3") << "\t"
                << s.at(sp, a, 0) << "\t" << s.at(sp, a, 1) << "\n";
}

void log_epoch(const scorer::EpochLog& e) {
  note("epoch " + std::to_string(e.epoch) + " lr " + tsv::fmt(e.lr, 6) + " loss " + tsv::fmt(e.loss, 4) +
       " auc " + (std::isfinite(e.auc_all) ? tsv::fmt(e.auc_all, 4) : std::string("n/a")));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difftrans: difficulty translation for two-class image patches"};
  app.require_subcommand(1);
  app.add_option("--seed", g.seed, "base random seed");
  app.add_flag("--deterministic", g.deterministic, "require bit-reproducible execution");
  app.add_flag("-q,--quiet", g.quiet, "suppress progress output");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out, synth_config, synth_intensity;
  std::optional<int> synth_slides, synth_pps, synth_side;
  std::optional<double> synth_balance, synth_train_fraction;
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--config", synth_config, "JSON synthesis config");
  synth_cmd->add_option("--slides", synth_slides, "number of slides");
  synth_cmd->add_option("--patches-per-slide", synth_pps, "patches per slide");
  synth_cmd->add_option("--side", synth_side, "image side in pixels");
  synth_cmd->add_option("--class-balance", synth_balance, "probability of the first class");
  synth_cmd->add_option("--train-fraction", synth_train_fraction, "target TRAIN fraction");
  synth_cmd->add_option("--intensity", synth_intensity, "uniform:a,b or point:v");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "check a manifest and print stratum counts");
  std::string verify_manifest_path;
  bool verify_no_images = false;
  verify_cmd->add_option("--manifest", verify_manifest_path, "manifest TSV")->required();
  verify_cmd->add_flag("--no-images", verify_no_images, "skip image file checks");

  // train-scorer / ladder
  auto* train_scorer_cmd = app.add_subcommand("train-scorer", "train the confidence scorer");
  auto* ladder_cmd = app.add_subcommand("ladder", "train the scorer and keep the checkpoint ladder");
  std::string ts_manifest, ts_out;
  std::vector<int> ts_checkpoints;
  TrainFlags ts_flags;
  for (auto* cmd : {train_scorer_cmd, ladder_cmd}) {
    cmd->add_option("--manifest", ts_manifest, "manifest TSV")->required();
    cmd->add_option("--out", ts_out, "output directory")->required();
    ts_flags.add(cmd);
  }
  train_scorer_cmd->add_option("--checkpoint-epochs", ts_checkpoints, "1-based epochs to keep");

  // score
  auto* score_cmd = app.add_subcommand("score", "score a split with a checkpoint");
  std::string sc_checkpoint, sc_manifest, sc_split = "train", sc_out;
  score_cmd->add_option("--checkpoint", sc_checkpoint, "scorer bundle")->required();
  score_cmd->add_option("--manifest", sc_manifest, "manifest TSV")->required();
  score_cmd->add_option("--split", sc_split, "train or test");
  score_cmd->add_option("--out", sc_out, "scores TSV")->required();

  // partition
  auto* part_cmd = app.add_subcommand("partition", "split one class into easy and hard domains");
  std::string pt_scores, pt_manifest, pt_class, pt_out, pt_mode = "gold";
  double pt_phi = 50.0, pt_easy = 50.0;
  std::size_t pt_min_target = 100;
  part_cmd->add_option("--scores", pt_scores, "scores TSV")->required();
  part_cmd->add_option("--manifest", pt_manifest, "manifest TSV (class names)")->required();
  part_cmd->add_option("--class", pt_class, "class to partition (default first)");
  part_cmd->add_option("--phi", pt_phi, "percent used as the hard domain");
  part_cmd->add_option("--easy-fraction", pt_easy, "percent used as the easy domain");
  part_cmd->add_option("--min-target", pt_min_target, "minimum hard-set size");
  part_cmd->add_option("--mode", pt_mode, "gold or predicted confidence");
  part_cmd->add_option("--out", pt_out, "partition TSV")->required();

  // train-translator
  auto* tt_cmd = app.add_subcommand("train-translator", "train the easy-to-hard translator");
  std::string tt_manifest, tt_partition, tt_out, tt_config;
  std::optional<int> tt_epochs, tt_batch, tt_width;
  std::optional<std::size_t> tt_min_target;
  tt_cmd->add_option("--manifest", tt_manifest, "manifest TSV")->required();
  tt_cmd->add_option("--partition", tt_partition, "partition TSV")->required();
  tt_cmd->add_option("--out", tt_out, "model bundle path")->required();
  tt_cmd->add_option("--config", tt_config, "JSON translator config");
  tt_cmd->add_option("--epochs", tt_epochs, "training epochs");
  tt_cmd->add_option("--batch-size", tt_batch, "minibatch size");
  tt_cmd->add_option("--width", tt_width, "generator and discriminator base width");
  tt_cmd->add_option("--min-target", tt_min_target, "minimum hard-set size");

  // translate
  auto* tr_cmd = app.add_subcommand("translate", "translate the easy set of a partition");
  std::string tr_model, tr_manifest, tr_partition, tr_out;
  tr_cmd->add_option("--model", tr_model, "translator bundle")->required();
  tr_cmd->add_option("--manifest", tr_manifest, "manifest TSV")->required();
  tr_cmd->add_option("--partition", tr_partition, "partition TSV")->required();
  tr_cmd->add_option("--out", tr_out, "output directory")->required();

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "keep generated images that maintain their label");
  std::string fl_generated, fl_checkpoint, fl_manifest, fl_out;
  filter_cmd->add_option("--generated", fl_generated, "generated-image manifest")->required();
  filter_cmd->add_option("--checkpoint", fl_checkpoint, "scorer bundle")->required();
  filter_cmd->add_option("--manifest", fl_manifest, "dataset manifest")->required();
  filter_cmd->add_option("--out", fl_out, "filter report TSV")->required();

  // augment (naive)
  auto* aug_cmd = app.add_subcommand("augment", "build naive combine-parts images");
  std::string ag_manifest, ag_partition, ag_out, ag_mode = "splice", ag_match;
  std::optional<std::size_t> ag_count;
  aug_cmd->add_option("--manifest", ag_manifest, "dataset manifest")->required();
  aug_cmd->add_option("--partition", ag_partition, "partition TSV")->required();
  aug_cmd->add_option("--out", ag_out, "output directory")->required();
  aug_cmd->add_option("--mode", ag_mode, "splice or blend");
  aug_cmd->add_option("--count", ag_count, "number of images");
  aug_cmd->add_option("--match", ag_match, "augmentation manifest whose size to match");

  // train-classifier
  auto* tc_cmd = app.add_subcommand("train-classifier", "train a classifier on base plus added images");
  std::string tc_manifest, tc_augmentation, tc_out;
  TrainFlags tc_flags;
  tc_cmd->add_option("--manifest", tc_manifest, "dataset manifest")->required();
  tc_cmd->add_option("--augmentation", tc_augmentation, "augmentation manifest");
  tc_cmd->add_option("--out", tc_out, "output directory")->required();
  tc_flags.add(tc_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "aggregate mean-of-top-5 AUC over seeds");
  std::vector<std::string> ev_logs;
  eval_cmd->add_option("logs", ev_logs, "training logs, one per seed")->required();

  // ks
  auto* ks_cmd = app.add_subcommand("ks", "compare confidence across agreement strata");
  std::string ks_scores, ks_manifest, ks_class;
  std::optional<double> ks_d;
  std::size_t ks_n1 = 0, ks_n2 = 0, ks_bins = 20;
  ks_cmd->add_option("--scores", ks_scores, "scores TSV");
  ks_cmd->add_option("--manifest", ks_manifest, "dataset manifest");
  ks_cmd->add_option("--class", ks_class, "class (default first)");
  ks_cmd->add_option("--bins", ks_bins, "histogram bins");
  ks_cmd->add_option("--statistic", ks_d, "p-value for a given D");
  ks_cmd->add_option("--n1", ks_n1, "first sample size");
  ks_cmd->add_option("--n2", ks_n2, "second sample size");

  // run / validate
  auto* run_cmd = app.add_subcommand("run", "run the full experiment graph");
  auto* validate_cmd = app.add_subcommand("validate", "validate an experiment config");
  std::string run_config;
  for (auto* cmd : {run_cmd, validate_cmd}) cmd->add_option("--config", run_config, "experiment JSON")->required();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the blinded annotation service");
  std::string sv_db, sv_manifest, sv_partition, sv_generated, sv_static, sv_host = "127.0.0.1";
  int sv_port = 8080;
  serve_cmd->add_option("--db", sv_db, "annotation store file")->required();
  serve_cmd->add_option("--manifest", sv_manifest, "dataset manifest")->required();
  serve_cmd->add_option("--partition", sv_partition, "partition TSV")->required();
  serve_cmd->add_option("--generated", sv_generated, "generated-image manifest")->required();
  serve_cmd->add_option("--host", sv_host, "bind address");
  serve_cmd->add_option("--port", sv_port, "port");
  serve_cmd->add_option("--root,--static", sv_static, "annotator UI directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      auto c = read_json_config<synth::SynthConfig>(synth_config);
      if (synth_slides) c.n_slides = *synth_slides;
      if (synth_pps) c.patches_per_slide = *synth_pps;
      if (synth_side) c.render.side = *synth_side;
      if (synth_balance) c.class_balance = *synth_balance;
      if (synth_train_fraction) c.train_fraction = *synth_train_fraction;
      if (!synth_intensity.empty()) c.intensity = synth::IntensityDistribution::parse(synth_intensity);
      if (g.seed) c.seed = *g.seed;
      const auto r = synth::generate_dataset(c, out_path(synth_out));
      note("wrote " + r.manifest_path + " (" + std::to_string(r.manifest.records.size()) + " patches)");
      print_strata(r.manifest);
    } else if (*verify_cmd) {
      const auto m = load_manifest(verify_manifest_path);
      const auto v = verify_manifest(m, !verify_no_images);
      print_strata(m);
      for (const auto& p : v.problems) std::cerr << "problem: " << p << "\n";
      return v.ok ? 0 : 1;
    } else if (*train_scorer_cmd || *ladder_cmd) {
      const auto m = load_manifest(ts_manifest);
      auto c = ts_flags.resolve(m.image_side);
      const auto train = scorer::load_split(m, Split::kTrain);
      const auto test = scorer::load_split(m, Split::kTest);
      const std::string dir = out_path(ts_out);
      fs::create_directories(dir);
      std::vector<scorer::ScorerCheckpoint> checkpoints;
      std::vector<scorer::EpochLog> log;
      if (*ladder_cmd) {
        auto ladder = scorer::checkpoint_ladder(train, test.size() ? &test : nullptr, c);
        checkpoints = std::move(ladder.earlier);
        checkpoints.push_back(std::move(ladder.initial));
        for (auto& ck : ladder.later) checkpoints.push_back(std::move(ck));
        log = std::move(ladder.log);
      } else {
        c.checkpoint_epochs = ts_checkpoints;
        auto r = scorer::train_classifier(train, test.size() ? &test : nullptr, c, nullptr, log_epoch);
        checkpoints = std::move(r.checkpoints);
        log = std::move(r.log);
      }
      for (const auto& ck : checkpoints) {
        const std::string p = (fs::path(dir) / ("epoch_" + std::to_string(ck.epoch) + ".bundle")).string();
        ck.save(p);
        note("wrote " + p);
      }
      scorer::write_training_log(log, (fs::path(dir) / "training_log.tsv").string());
    } else if (*score_cmd) {
      const auto m = load_manifest(sc_manifest);
      const auto ck = scorer::ScorerCheckpoint::load(sc_checkpoint);
      const auto data = scorer::load_split(m, parse_split(sc_split));
      const std::string out = out_path(sc_out);
      ensure_parent(out);
      scorer::save_scores(scorer::score(ck, data), m.class_names, out);
      note("scored " + std::to_string(data.size()) + " images");
    } else if (*part_cmd) {
      const auto m = load_manifest(pt_manifest);
      const ClassId cls = class_arg(m, pt_class);
      std::vector<scorer::ConfidenceScore> own;
      for (const auto& s : scorer::load_scores(pt_scores, m.class_names))
        if (s.gold_class == cls) own.push_back(s);
      partition::PartitionConfig pc;
      pc.phi = pt_phi;
      pc.easy_fraction = pt_easy;
      pc.min_target = pt_min_target;
      if (pt_mode == "predicted") {
        pc.mode = partition::ConfidenceMode::kPredictedClass;
      } else if (pt_mode != "gold") {
        throw ValidationError("mode must be gold or predicted");
      }
      auto p = partition::partition(own, pc);
      p.class_id = cls;
      const std::string out = out_path(pt_out);
      ensure_parent(out);
      partition::save_partition(p, m.class_names, out);
      std::cout << "hard\t" << p.hard_set.size() << "\neasy\t" << p.easy_set.size() << "\n";
    } else if (*tt_cmd) {
      const auto m = load_manifest(tt_manifest);
      const auto p = partition::load_partition(tt_partition, m.class_names);
      auto c = read_json_config<translator::TranslatorConfig>(tt_config);
      if (tt_epochs) c.epochs = *tt_epochs;
      if (tt_batch) c.batch_size = *tt_batch;
      if (tt_width) c.generator.base_width = c.discriminator.base_width = *tt_width;
      if (tt_min_target) c.min_target = *tt_min_target;
      if (g.seed) c.seed = *g.seed;
      c.generator.image_side = m.image_side;
      const auto r = translator::train_translator(load_by_ids(m, p.easy_set), load_by_ids(m, p.hard_set), c,
                                                  p.class_id, p.phi, [](const translator::EpochTrace& e) {
                                                    note("epoch " + std::to_string(e.epoch) + " adversarial " +
                                                         tsv::fmt(e.adversarial, 4) + " cycle " + tsv::fmt(e.cycle, 4) +
                                                         " identity " + tsv::fmt(e.identity, 4));
                                                  });
      for (const auto& w : r.warnings) note("warning: " + w);
      const std::string out = out_path(tt_out);
      ensure_parent(out);
      translator::write_traces(r.traces, out + ".traces.tsv");
      r.model.save(out);
      if (r.aborted) {
        std::cerr << "error: " << r.abort_reason << "; last good state written to " << out << "\n";
        return 1;
      }
    } else if (*tr_cmd) {
      const auto m = load_manifest(tr_manifest);
      const auto p = partition::load_partition(tr_partition, m.class_names);
      const auto model = translator::TranslatorModel::load(tr_model);
      auto gen = translator::translate(model, load_by_ids(m, p.easy_set), p.easy_set);
      std::vector<augmenter::AddedImage> added;
      for (auto& x : gen) {
        quantize(x.image);
        added.push_back(augmenter::from_generated(x));
      }
      auto set = augmenter::assemble(m, std::move(added));
      const std::string path = augmenter::save_augmentation(set, out_path(tr_out), "generated.tsv");
      note("wrote " + path + " (" + std::to_string(gen.size()) + " images, model " + model.hash().substr(0, 12) + ")");
    } else if (*filter_cmd) {
      const auto m = load_manifest(fl_manifest);
      const auto ck = scorer::ScorerCheckpoint::load(fl_checkpoint);
      const auto dir = fs::path(fl_generated).parent_path();
      std::vector<translator::GeneratedImage> gen;
      for (const auto& a : augmenter::load_augmentation(fl_generated, m.class_names)) {
        translator::GeneratedImage x;
        x.patch_id = a.patch_id;
        x.source_id = a.source_ids.front();
        x.source_class = a.class_id;
        x.model_hash = a.model_hash;
        x.phi = a.provenance.rfind("GENERATED_PHI_", 0) == 0 ? std::stod(a.provenance.substr(14)) : 0.0;
        x.image = read_png((dir / a.image_ref).string());
        gen.push_back(std::move(x));
      }
      const auto f = augmenter::filter_label_maintained(gen, ck);
      augmenter::save_filter_report(f, m.class_names, out_path(fl_out));
      std::vector<augmenter::AddedImage> kept;
      for (const auto& a : augmenter::load_augmentation(fl_generated, m.class_names))
        for (const auto& k : f.kept)
          if (k.patch_id == a.patch_id) kept.push_back(a);
      auto set = augmenter::assemble(m, std::move(kept));
      augmenter::save_augmentation(set, dir.string());
      const auto rate = f.maintained_rate();
      std::cout << "kept\t" << f.kept.size() << "\ntotal\t" << f.total() << "\nrate\t"
                << (rate ? tsv::fmt(*rate, 1) + "%" : std::string("N/A")) << "\n";
    } else if (*aug_cmd) {
      const auto m = load_manifest(ag_manifest);
      const auto p = partition::load_partition(ag_partition, m.class_names);
      std::size_t n = 0;
      if (ag_count) {
        n = *ag_count;
      } else if (!ag_match.empty()) {
        n = augmenter::load_augmentation(ag_match, m.class_names).size();
      } else {
        throw ValidationError("augment needs --count or --match");
      }
      auto naive = augmenter::naive_augment(load_by_ids(m, p.easy_set), load_by_ids(m, p.hard_set), n,
                                            g.seed.value_or(0), augmenter::parse_combine_mode(ag_mode));
      std::vector<augmenter::AddedImage> added;
      for (std::size_t i = 0; i < naive.size(); ++i) {
        const auto e = p.easy_set[naive[i].easy_index];
        const auto h = p.hard_set[naive[i].hard_index];
        added.push_back(augmenter::from_naive(std::move(naive[i]), i, p.class_id, e, h));
      }
      auto set = augmenter::assemble(m, std::move(added));
      note("wrote " + augmenter::save_augmentation(set, out_path(ag_out)));
    } else if (*tc_cmd) {
      const auto m = load_manifest(tc_manifest);
      std::vector<augmenter::AddedImage> added;
      if (!tc_augmentation.empty()) added = augmenter::load_augmentation(tc_augmentation, m.class_names);
      auto data = augmenter::assemble(m, std::move(added));
      if (!tc_augmentation.empty()) data.base_dir = fs::path(tc_augmentation).parent_path().string();
      const auto train = augmenter::training_set(data);
      const auto test = scorer::load_split(m, Split::kTest);
      auto c = tc_flags.resolve(m.image_side);
      const auto r = scorer::train_classifier(train, &test, c, nullptr, log_epoch);
      const std::string dir = out_path(tc_out);
      fs::create_directories(dir);
      scorer::write_training_log(r.log, (fs::path(dir) / "log.tsv").string());
      r.checkpoints.back().save((fs::path(dir) / "final.bundle").string());
    } else if (*eval_cmd) {
      std::vector<std::vector<double>> hi, lo, all;
      for (const auto& path : ev_logs) {
        const auto t = tsv::read_table(path);
        const int h = t.column("auc_high"), l = t.column("auc_low"), a = t.column("auc_all");
        if (h < 0 || l < 0 || a < 0) throw ParseError(path, 0, "not a training log");
        hi.emplace_back();
        lo.emplace_back();
        all.emplace_back();
        for (const auto& row : t.rows) {
          hi.back().push_back(std::stod(row.fields[h]));
          lo.back().push_back(std::stod(row.fields[l]));
          all.back().push_back(std::stod(row.fields[a]));
        }
      }
      std::cout << "stratum\tmean_top5_auc\tstandard_error\tn_seeds\n";
      for (auto [name, traces] : {std::pair{"high", &hi}, std::pair{"low", &lo}, std::pair{"all", &all}}) {
        const auto r = metrics::top5_mean_over_seeds(*traces);
        std::cout << name << "\t" << tsv::fmt(100 * r.mean, 2) << "\t" << tsv::fmt(100 * r.standard_error, 2) << "\t"
                  << r.n << "\n";
      }
    } else if (*ks_cmd) {
      if (ks_d) {
        std::cout << "D\t" << *ks_d << "\np_value\t" << metrics::ks_p_value(*ks_d, ks_n1, ks_n2) << "\n";
        return 0;
      }
      if (ks_scores.empty() || ks_manifest.empty()) throw ValidationError("ks needs --scores and --manifest");
      const auto m = load_manifest(ks_manifest);
      const ClassId cls = class_arg(m, ks_class);
      std::vector<metrics::ScoredRecord> scored;
      for (const auto& s : scorer::load_scores(ks_scores, m.class_names)) {
        if (s.gold_class != cls) continue;
        const PatchRecord* r = m.find(s.patch_id);
        if (!r) throw NotFoundError("patch '" + s.patch_id + "' not in manifest");
        scored.push_back({r, s.own_class_confidence});
      }
      const auto r = metrics::agreement_report(scored, ks_bins);
      std::cout << "n_high\t" << r.high.n << "\nn_low\t" << r.low.n << "\nmean_high\t" << r.high.mean
                << "\nmean_low\t" << r.low.mean << "\nD\t" << r.ks.statistic << "\np_value\t" << r.ks.p_value
                << "\n";
    } else if (*validate_cmd) {
      const auto c = pipeline::load_config(run_config);
      std::cout << "ok\t" << c.hash() << "\n";
    } else if (*run_cmd) {
      auto c = pipeline::load_config(run_config);
      if (g.seed) c.seed = *g.seed;
      if (g.deterministic) c.deterministic = true;
      const auto r = pipeline::run_experiment(c, {[](const std::string& s) { note(s); }});
      note("reports in " + (fs::path(r.output_dir) / "reports").string());
    } else if (*serve_cmd) {
      const auto m = load_manifest(sv_manifest);
      annotation::Store store(sv_db, m.class_names);
      annotation::ServerConfig sc;
      sc.host = sv_host;
      sc.port = sv_port;
      sc.static_dir = sv_static;
      if (const char* t = std::getenv(annotation::kAdminTokenEnv)) sc.admin_token = t;
      if (sc.admin_token.empty())
        note(std::string("warning: ") + annotation::kAdminTokenEnv + " unset; admin endpoints disabled");
      annotation::AnnotationServer server(store, annotation::pools_from_experiment(m, sv_partition, sv_generated), sc);
      const int port = server.bind();
      note("listening on http://" + sv_host + ":" + std::to_string(port));
      server.serve();
    }
  } catch (const pipeline::StageFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
