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

#include "difftrans/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "difftrans/errors.hpp"
#include "difftrans/hashing.hpp"
#include "difftrans/metrics.hpp"
#include "difftrans/nn/bundle.hpp"
#include "difftrans/nn/optim.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::scorer {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0F ? d / mx : 0.0F;
  if (d <= 0.0F) {
    h = 0.0F;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0F + (b - r) / d;
  } else {
    h = 4.0F + (r - g) / d;
  }
  h /= 6.0F;
  if (h < 0.0F) h += 1.0F;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  const float hh = h * 6.0F;
  const int i = static_cast<int>(std::floor(hh)) % 6;
  const float f = hh - std::floor(hh);
  const float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

float gray(const Image& img, std::size_t i) {
  const std::size_t p = img.plane();
  return 0.299F * img.data[i] + 0.587F * img.data[p + i] + 0.114F * img.data[2 * p + i];
}

void blend(Image& img, float factor, const std::vector<float>& other_per_pixel, bool per_pixel, float other_const) {
  const std::size_t p = img.plane();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < p; ++i) {
      float& v = img.data[c * p + i];
      const float o = per_pixel ? other_per_pixel[i] : other_const;
      v = std::clamp(factor * v + (1.0F - factor) * o, 0.0F, 1.0F);
    }
}

nn::Tensor to_batch(const std::vector<const Image*>& images) {
  const Image& first = *images.front();
  nn::Tensor t(static_cast<int>(images.size()), 3, first.height, first.width);
  for (std::size_t b = 0; b < images.size(); ++b)
    std::copy(images[b]->data.begin(), images[b]->data.end(), t.sample(static_cast<int>(b)));
  return t;
}

void check_side(const std::vector<Image>& images, int side) {
  for (const auto& img : images)
    if (img.height != side || img.width != side)
      throw ValidationError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                            ", model expects side " + std::to_string(side));
}

double auc_or_nan(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(labels.size())) return kNaN;
  return metrics::auc(scores, labels);
}

}  // namespace

void to_json(nlohmann::json& j, const JitterConfig& c) {
  j = {{"enabled", c.enabled},       {"brightness", c.brightness}, {"contrast", c.contrast},
       {"saturation", c.saturation}, {"hue", c.hue}};
}

void from_json(const nlohmann::json& j, JitterConfig& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.brightness = j.value("brightness", c.brightness);
  c.contrast = j.value("contrast", c.contrast);
  c.saturation = j.value("saturation", c.saturation);
  c.hue = j.value("hue", c.hue);
}

void color_jitter(Image& img, Rng& rng, const JitterConfig& cfg) {
  const auto b = static_cast<float>(uniform(rng, 1.0 - cfg.brightness, 1.0 + cfg.brightness));
  const auto c = static_cast<float>(uniform(rng, 1.0 - cfg.contrast, 1.0 + cfg.contrast));
  const auto s = static_cast<float>(uniform(rng, 1.0 - cfg.saturation, 1.0 + cfg.saturation));
  const auto h = static_cast<float>(uniform(rng, -cfg.hue, cfg.hue));
  std::vector<int> order{0, 1, 2, 3};
  shuffle(order, rng);
  const std::size_t p = img.plane();
  for (int op : order) {
    switch (op) {
      case 0:
        for (float& v : img.data) v = std::clamp(v * b, 0.0F, 1.0F);
        break;
      case 1: {
        double m = 0.0;
        for (std::size_t i = 0; i < p; ++i) m += gray(img, i);
        blend(img, c, {}, false, static_cast<float>(m / static_cast<double>(p)));
        break;
      }
      case 2: {
        std::vector<float> g(p);
        for (std::size_t i = 0; i < p; ++i) g[i] = gray(img, i);
        blend(img, s, g, true, 0.0F);
        break;
      }
      default:
        for (std::size_t i = 0; i < p; ++i) {
          float hh, ss, vv;
          rgb_to_hsv(img.data[i], img.data[p + i], img.data[2 * p + i], hh, ss, vv);
          hh += h;
          hh -= std::floor(hh);
          hsv_to_rgb(hh, ss, vv, img.data[i], img.data[p + i], img.data[2 * p + i]);
        }
        break;
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (batch_size < 2) throw ValidationError("batch_size must be at least 2");
  if (!(initial_lr > 0.0) || !(lr_decay > 0.0) || weight_decay < 0.0)
    throw ValidationError("invalid optimizer settings");
  arch.validate();
}

double TrainConfig::learning_rate(int epoch) const { return initial_lr * std::pow(lr_decay, epoch); }

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"initial_lr", c.initial_lr},
       {"lr_decay", c.lr_decay},
       {"weight_decay", c.weight_decay},
       {"jitter", c.jitter},
       {"arch", c.arch},
       {"checkpoint_epochs", c.checkpoint_epochs},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.initial_lr = j.value("initial_lr", c.initial_lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("jitter")) c.jitter = j.at("jitter").get<JitterConfig>();
  if (j.contains("arch")) c.arch = j.at("arch").get<nn::ResNetConfig>();
  c.checkpoint_epochs = j.value("checkpoint_epochs", c.checkpoint_epochs);
  c.seed = j.value("seed", c.seed);
}

std::string TrainConfig::hash() const { return sha256_hex(nlohmann::json(*this).dump()); }

void LabeledSet::append(const LabeledSet& o) {
  ids.insert(ids.end(), o.ids.begin(), o.ids.end());
  images.insert(images.end(), o.images.begin(), o.images.end());
  labels.insert(labels.end(), o.labels.begin(), o.labels.end());
  agreement.insert(agreement.end(), o.agreement.begin(), o.agreement.end());
}

LabeledSet load_records(const DatasetManifest& manifest, const std::vector<const PatchRecord*>& records) {
  LabeledSet s;
  for (const PatchRecord* r : records) {
    const GoldLabel g = r->gold();
    s.ids.push_back(r->patch_id);
    s.images.push_back(read_png(manifest.resolve(*r)));
    s.labels.push_back(g.gold);
    s.agreement.push_back(g.agreement);
  }
  return s;
}

LabeledSet load_split(const DatasetManifest& manifest, Split split) {
  return load_records(manifest, manifest.select(split));
}

void ScorerCheckpoint::save(const std::string& path) const {
  nn::Bundle b;
  b.header = {{"kind", "scorer"},
              {"epoch", epoch},
              {"training_config_hash", training_config_hash},
              {"arch", arch}};
  b.tensors = state;
  nn::write_bundle(path, b);
}

ScorerCheckpoint ScorerCheckpoint::load(const std::string& path) {
  nn::Bundle b = nn::read_bundle(path, "scorer");
  ScorerCheckpoint c;
  c.epoch = b.header.value("epoch", 0);
  c.training_config_hash = b.header.value("training_config_hash", "");
  c.arch = b.header.at("arch").get<nn::ResNetConfig>();
  c.state = std::move(b.tensors);
  // Validate against the architecture.
  Rng rng(0);
  auto net = nn::build_resnet(c.arch, rng);
  nn::load_state(*net, c.state);
  return c;
}

ScorerCheckpoint ScorerCheckpoint::degenerate(const nn::ResNetConfig& arch) {
  Rng rng(0);
  auto net = nn::build_resnet(arch, rng);
  ScorerCheckpoint c;
  c.arch = arch;
  c.state = nn::state_of(*net);
  for (auto& t : c.state) std::fill(t.begin(), t.end(), 0.0F);
  return c;
}

Classifier::Classifier(const ScorerCheckpoint& checkpoint) : arch_(checkpoint.arch), epoch_(checkpoint.epoch) {
  Rng rng(0);
  net_ = nn::build_resnet(arch_, rng);
  nn::load_state(*net_, checkpoint.state);
}

Classifier::~Classifier() = default;
Classifier::Classifier(Classifier&&) noexcept = default;
Classifier& Classifier::operator=(Classifier&&) noexcept = default;

std::vector<double> Classifier::predict(const std::vector<Image>& images, int batch_size) const {
  check_side(images, arch_.image_side);
  std::vector<double> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&images[i]);
    const nn::Tensor logits = net_->forward(to_batch(batch), false);
    for (const auto& p : nn::softmax(logits)) out.push_back(p[1]);
  }
  return out;
}

TrainResult train_classifier(const LabeledSet& train_in, const LabeledSet* eval, const TrainConfig& config,
                             const LabeledSet* extra, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  LabeledSet owned;
  const LabeledSet* train = &train_in;
  if (extra && extra->size() > 0) {
    owned = train_in;
    owned.append(*extra);
    train = &owned;
  }
  if (train->size() < 2) throw ValidationError("training set needs at least 2 images");
  const auto ones = std::count(train->labels.begin(), train->labels.end(), ClassId{1});
  if (ones == 0 || ones == static_cast<long>(train->size()))
    throw ValidationError("training data contains a single class");
  check_side(train->images, config.arch.image_side);
  if (eval) check_side(eval->images, config.arch.image_side);

  Rng init_rng(derive_seed(config.seed, "init"));
  auto net = nn::build_resnet(config.arch, init_rng);
  nn::Adam opt(nn::parameters(*net), {config.initial_lr, 0.9, 0.999, 1e-8, config.weight_decay});
  const std::string cfg_hash = config.hash();

  std::vector<int> keep = config.checkpoint_epochs;
  if (keep.empty()) keep.push_back(config.epochs);

  std::vector<int> eval_labels;
  if (eval) eval_labels.assign(eval->labels.begin(), eval->labels.end());

  TrainResult result;
  const std::size_t n = train->size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    opt.set_lr(lr);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(config.seed, "order:" + std::to_string(epoch)));
    shuffle(order, order_rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      if (end - start < 2) break;  // batch norm needs two samples
      std::vector<Image> imgs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        Image img = train->images[order[i]];
        if (config.jitter.enabled) {
          Rng jr(derive_seed(config.seed, "jitter:" + std::to_string(epoch) + ":" + std::to_string(order[i])));
          color_jitter(img, jr, config.jitter);
        }
        imgs.push_back(std::move(img));
        labels.push_back(train->labels[order[i]]);
      }
      std::vector<const Image*> ptrs;
      for (const auto& im : imgs) ptrs.push_back(&im);
      opt.zero_grad();
      const nn::Tensor logits = net->forward(to_batch(ptrs), true);
      nn::Tensor grad;
      const double loss = nn::softmax_cross_entropy(logits, labels, grad);
      if (!std::isfinite(loss))
        throw NonFiniteLoss("classifier loss became non-finite at epoch " + std::to_string(epoch + 1));
      net->backward(grad);
      opt.step();
      loss_sum += loss * static_cast<double>(end - start);
      loss_count += end - start;
    }
    net->clear_cache();

    EpochLog log;
    log.epoch = epoch + 1;
    log.lr = lr;
    log.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : kNaN;
    log.auc_all = log.auc_high = log.auc_low = kNaN;
    if (eval && eval->size() > 0) {
      ScorerCheckpoint tmp;
      tmp.arch = config.arch;
      tmp.state = nn::state_of(*net);
      const auto p1 = Classifier(tmp).predict(eval->images);
      log.auc_all = auc_or_nan(p1, eval_labels);
      std::vector<double> sh, sl;
      std::vector<int> lh, ll;
      for (std::size_t i = 0; i < p1.size(); ++i) {
        const bool high = eval->agreement[i] == Agreement::kThreeOfThree;
        (high ? sh : sl).push_back(p1[i]);
        (high ? lh : ll).push_back(eval_labels[i]);
      }
      log.auc_high = auc_or_nan(sh, lh);
      log.auc_low = auc_or_nan(sl, ll);
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (std::find(keep.begin(), keep.end(), epoch + 1) != keep.end()) {
      ScorerCheckpoint ck;
      ck.epoch = epoch + 1;
      ck.training_config_hash = cfg_hash;
      ck.arch = config.arch;
      ck.state = nn::state_of(*net);
      result.checkpoints.push_back(std::move(ck));
    }
  }
  return result;
}

std::vector<ConfidenceScore> score(const ScorerCheckpoint& checkpoint, const LabeledSet& data) {
  const Classifier clf(checkpoint);
  const auto p1 = clf.predict(data.images);
  std::vector<ConfidenceScore> out;
  out.reserve(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    ConfidenceScore s;
    s.patch_id = data.ids[i];
    s.checkpoint_epoch = checkpoint.epoch;
    s.p_second_class = p1[i];
    s.gold_class = data.labels[i];
    s.own_class_confidence = s.gold_class == 1 ? p1[i] : 1.0 - p1[i];
    s.predicted_class = p1[i] > 0.5 ? 1 : 0;
    out.push_back(std::move(s));
  }
  return out;
}

void save_scores(const std::vector<ConfidenceScore>& scores, const ClassNames& classes, const std::string& path) {
  tsv::Table t;
  t.header = {"patch_id", "checkpoint_epoch", "gold_class", "predicted_class", "own_class_confidence",
              "p_second_class"};
  for (const auto& s : scores)
    t.rows.push_back({0,
                      {s.patch_id, std::to_string(s.checkpoint_epoch), classes[s.gold_class],
                       classes[s.predicted_class], tsv::fmt(s.own_class_confidence, 9),
                       tsv::fmt(s.p_second_class, 9)}});
  tsv::write_table(path, t);
}

std::vector<ConfidenceScore> load_scores(const std::string& path, const ClassNames& classes) {
  const tsv::Table t = tsv::read_table(path);
  const int id = t.column("patch_id"), ep = t.column("checkpoint_epoch"), gc = t.column("gold_class"),
            pc = t.column("predicted_class"), oc = t.column("own_class_confidence"), p1 = t.column("p_second_class");
  if (id < 0 || ep < 0 || gc < 0 || pc < 0 || oc < 0 || p1 < 0) throw ParseError(path, 0, "missing score columns");
  auto cls = [&](const std::string& s, std::size_t line) -> ClassId {
    if (s == classes[0]) return 0;
    if (s == classes[1]) return 1;
    throw ParseError(path, line, "unknown class '" + s + "'");
  };
  std::vector<ConfidenceScore> out;
  for (const auto& row : t.rows) {
    ConfidenceScore s;
    s.patch_id = row.fields[id];
    s.checkpoint_epoch = std::stoi(row.fields[ep]);
    s.gold_class = cls(row.fields[gc], row.line);
    s.predicted_class = cls(row.fields[pc], row.line);
    s.own_class_confidence = std::stod(row.fields[oc]);
    s.p_second_class = std::stod(row.fields[p1]);
    out.push_back(std::move(s));
  }
  return out;
}

Ladder checkpoint_ladder(const LabeledSet& train, const LabeledSet* eval, TrainConfig config) {
  if (config.epochs < kLaterEpochs.back())
    throw ValidationError("checkpoint ladder needs at least " + std::to_string(kLaterEpochs.back()) +
                          " epochs, got " + std::to_string(config.epochs));
  config.checkpoint_epochs.assign(kEarlierEpochs.begin(), kEarlierEpochs.end());
  config.checkpoint_epochs.push_back(kInitialEpoch);
  config.checkpoint_epochs.insert(config.checkpoint_epochs.end(), kLaterEpochs.begin(), kLaterEpochs.end());
  config.epochs = kLaterEpochs.back();
  TrainResult r = train_classifier(train, eval, config);
  Ladder ladder;
  ladder.log = std::move(r.log);
  for (auto& ck : r.checkpoints) {
    if (ck.epoch == kInitialEpoch) {
      ladder.initial = std::move(ck);
    } else if (ck.epoch < kInitialEpoch) {
      ladder.earlier.push_back(std::move(ck));
    } else {
      ladder.later.push_back(std::move(ck));
    }
  }
  return ladder;
}

void write_training_log(const std::vector<EpochLog>& log, const std::string& path) {
  tsv::Table t;
  t.header = {"epoch", "lr", "loss", "auc_all", "auc_high", "auc_low"};
  auto f = [](double v) { return std::isnan(v) ? std::string("NA") : tsv::fmt(v, 6); };
  for (const auto& e : log)
    t.rows.push_back({0, {std::to_string(e.epoch), tsv::fmt(e.lr, 10), f(e.loss), f(e.auc_all), f(e.auc_high), f(e.auc_low)}});
  tsv::write_table(path, t);
}

}  // namespace difftrans::scorer
