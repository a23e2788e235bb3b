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

#include "difftrans/translator.hpp"

#include <algorithm>
#include <cmath>

#include "difftrans/errors.hpp"
#include "difftrans/hashing.hpp"
#include "difftrans/nn/bundle.hpp"
#include "difftrans/nn/optim.hpp"
#include "difftrans/random.hpp"
#include "difftrans/tsv.hpp"

namespace difftrans::translator {

namespace {

const char* to_string(AdversarialLoss a) { return a == AdversarialLoss::kLeastSquares ? "lsgan" : "logistic"; }

AdversarialLoss parse_adversarial(const std::string& s) {
  if (s == "lsgan") return AdversarialLoss::kLeastSquares;
  if (s == "logistic") return AdversarialLoss::kLogistic;
  throw ValidationError("unknown adversarial loss '" + s + "'");
}

nn::Tensor to_batch(const std::vector<const Image*>& images) {
  nn::Tensor t(static_cast<int>(images.size()), 3, images.front()->height, images.front()->width);
  for (std::size_t b = 0; b < images.size(); ++b)
    std::copy(images[b]->data.begin(), images[b]->data.end(), t.sample(static_cast<int>(b)));
  return t;
}

Image to_image(const nn::Tensor& t, int i) {
  Image img(t.h, t.w);
  std::copy(t.sample(i), t.sample(i) + t.sample_size(), img.data.begin());
  return img;
}

// Loss of discriminator output against a constant real (1) or fake (0)
// target. Returns the unweighted mean; grad carries the weight.
double adversarial_loss(AdversarialLoss form, const nn::Tensor& pred, bool real, nn::Tensor& grad, double weight) {
  if (form == AdversarialLoss::kLeastSquares) return nn::mse_to_constant(pred, real ? 1.0F : 0.0F, grad, weight);
  grad = pred.zeros_like();
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double x = pred.data[i];
    const double z = real ? -x : x;
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    const double s = 1.0 / (1.0 + std::exp(-x));
    grad.data[i] = static_cast<float>(weight * (s - (real ? 1.0 : 0.0)) / n);
  }
  return loss / n;
}

// History of generated images shown to the discriminators.
class ImagePool {
 public:
  ImagePool(int capacity, Rng& rng) : capacity_(capacity), rng_(rng) {}

  nn::Tensor query(const nn::Tensor& batch) {
    if (capacity_ <= 0) return batch;
    nn::Tensor out = batch.zeros_like();
    const std::size_t ss = batch.sample_size();
    for (int i = 0; i < batch.n; ++i) {
      std::vector<float> img(batch.sample(i), batch.sample(i) + ss);
      if (static_cast<int>(stored_.size()) < capacity_) {
        stored_.push_back(img);
      } else if (uniform01(rng_) < 0.5) {
        const std::size_t k = uniform_index(rng_, stored_.size());
        std::swap(stored_[k], img);
      }
      std::copy(img.begin(), img.end(), out.sample(i));
    }
    return out;
  }

 private:
  int capacity_;
  Rng& rng_;
  std::vector<std::vector<float>> stored_;
};

bool finite(double v) { return std::isfinite(v); }

}  // namespace

double TranslatorConfig::lr_factor(int epoch) const {
  const int constant = epochs / 2;
  const int decay = epochs - constant;
  return 1.0 - std::max(0, epoch + 1 - constant) / static_cast<double>(decay + 1);
}

void TranslatorConfig::validate() const {
  if (lambda_cycle < 0 || identity_ratio < 0) throw ValidationError("loss weights must be non-negative");
  if (epochs < 1) throw ValidationError("translator epochs must be at least 1");
  if (batch_size < 1) throw ValidationError("translator batch_size must be at least 1");
  if (!(lr_generator > 0) || !(lr_discriminator > 0)) throw ValidationError("learning rates must be positive");
  if (pool_size < 0 || steps_per_epoch < 0) throw ValidationError("pool_size and steps_per_epoch must be >= 0");
  generator.validate();
  if (discriminator.layers < 1 || discriminator.base_width < 1)
    throw ValidationError("discriminator needs at least one layer and a positive width");
  // Each stride-2 layer halves the side; the two stride-1 4x4 convs then trim 2.
  const int min_side = 3 << discriminator.layers;
  if (generator.image_side < min_side)
    throw ValidationError("image_side " + std::to_string(generator.image_side) + " is too small for a " +
                          std::to_string(discriminator.layers) + "-layer discriminator (needs >= " +
                          std::to_string(min_side) + ")");
}

void to_json(nlohmann::json& j, const TranslatorConfig& c) {
  j = {{"adversarial", to_string(c.adversarial)},
       {"lambda_cycle", c.lambda_cycle},
       {"identity_ratio", c.identity_ratio},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr_generator", c.lr_generator},
       {"lr_discriminator", c.lr_discriminator},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"pool_size", c.pool_size},
       {"steps_per_epoch", c.steps_per_epoch},
       {"min_target", c.min_target},
       {"generator", c.generator},
       {"discriminator", c.discriminator},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TranslatorConfig& c) {
  if (j.contains("adversarial")) c.adversarial = parse_adversarial(j.at("adversarial").get<std::string>());
  c.lambda_cycle = j.value("lambda_cycle", c.lambda_cycle);
  c.identity_ratio = j.value("identity_ratio", c.identity_ratio);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_generator = j.value("lr_generator", c.lr_generator);
  c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.min_target = j.value("min_target", c.min_target);
  if (j.contains("generator")) c.generator = j.at("generator").get<nn::GeneratorConfig>();
  if (j.contains("discriminator")) c.discriminator = j.at("discriminator").get<nn::DiscriminatorConfig>();
  c.seed = j.value("seed", c.seed);
}

std::string TranslatorModel::hash() const {
  Hasher h;
  h.update(nlohmann::json(config).dump());
  for (const auto* part : {&g_easy_to_hard, &g_hard_to_easy, &d_easy, &d_hard})
    for (const auto& t : *part) h.update(std::span<const float>(t));
  return h.hex();
}

void TranslatorModel::save(const std::string& path) const {
  nn::Bundle b;
  b.header = {{"kind", "translator"},
              {"config", config},
              {"class_id", class_id},
              {"phi", phi},
              {"data_fingerprint", data_fingerprint},
              {"epochs_completed", epochs_completed},
              {"counts",
               {g_easy_to_hard.size(), g_hard_to_easy.size(), d_easy.size(), d_hard.size()}}};
  for (const auto* part : {&g_easy_to_hard, &g_hard_to_easy, &d_easy, &d_hard})
    b.tensors.insert(b.tensors.end(), part->begin(), part->end());
  nn::write_bundle(path, b);
}

TranslatorModel TranslatorModel::load(const std::string& path) {
  nn::Bundle b = nn::read_bundle(path, "translator");
  TranslatorModel m;
  try {
    m.config = b.header.at("config").get<TranslatorConfig>();
    m.class_id = b.header.at("class_id").get<ClassId>();
    m.phi = b.header.at("phi").get<double>();
    m.data_fingerprint = b.header.value("data_fingerprint", "");
    m.epochs_completed = b.header.value("epochs_completed", 0);
    const auto counts = b.header.at("counts").get<std::vector<std::size_t>>();
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (counts.size() != 4 || total != b.tensors.size()) throw ParseError(path, 0, "tensor count mismatch");
    auto it = b.tensors.begin();
    for (auto [part, n] : {std::pair{&m.g_easy_to_hard, counts[0]}, std::pair{&m.g_hard_to_easy, counts[1]},
                           std::pair{&m.d_easy, counts[2]}, std::pair{&m.d_hard, counts[3]}}) {
      part->assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(n)));
      it += static_cast<std::ptrdiff_t>(n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, std::string("bad translator header: ") + e.what());
  }
  return m;
}

std::string fingerprint(const std::vector<Image>& easy, const std::vector<Image>& hard) {
  Hasher h;
  for (const auto* set : {&easy, &hard}) {
    h.update("|" + std::to_string(set->size()) + "|");
    for (const auto& img : *set) h.update(std::span<const float>(img.data));
  }
  return h.hex();
}

TrainResult train_translator(const std::vector<Image>& easy, const std::vector<Image>& hard,
                             const TranslatorConfig& config_in, ClassId class_id, double phi,
                             const std::function<void(const EpochTrace&)>& on_epoch) {
  config_in.validate();
  if (easy.empty()) throw ValidationError("easy domain is empty");
  if (hard.empty()) throw ValidationError("hard domain is empty");
  if (hard.size() < config_in.min_target) throw MinTargetViolation(hard.size(), config_in.min_target);
  const int side = config_in.generator.image_side;
  for (const auto* set : {&easy, &hard})
    for (const auto& img : *set)
      if (img.height != side || img.width != side)
        throw ValidationError("image size does not match generator image_side " + std::to_string(side));

  TrainResult result;
  TranslatorConfig config = config_in;
  const std::size_t smaller = std::min(easy.size(), hard.size());
  if (static_cast<std::size_t>(config.batch_size) > smaller) {
    result.warnings.push_back("batch_size " + std::to_string(config.batch_size) + " clamped to " +
                              std::to_string(smaller));
    config.batch_size = static_cast<int>(smaller);
  }

  Rng init_rng(derive_seed(config.seed, "translator:init"));
  auto g_ab = nn::build_generator(config.generator, init_rng);
  auto g_ba = nn::build_generator(config.generator, init_rng);
  auto d_a = nn::build_discriminator(config.discriminator, init_rng);
  auto d_b = nn::build_discriminator(config.discriminator, init_rng);

  std::vector<nn::Param*> g_params = nn::parameters(*g_ab);
  for (auto* p : nn::parameters(*g_ba)) g_params.push_back(p);
  std::vector<nn::Param*> d_params = nn::parameters(*d_a);
  for (auto* p : nn::parameters(*d_b)) d_params.push_back(p);
  nn::Adam opt_g(g_params, {config.lr_generator, config.beta1, config.beta2, 1e-8, 0.0});
  nn::Adam opt_d(d_params, {config.lr_discriminator, config.beta1, config.beta2, 1e-8, 0.0});

  auto snapshot = [&](int epochs_done) {
    TranslatorModel m;
    m.config = config;
    m.class_id = class_id;
    m.phi = phi;
    m.data_fingerprint = fingerprint(easy, hard);
    m.epochs_completed = epochs_done;
    m.g_easy_to_hard = nn::state_of(*g_ab);
    m.g_hard_to_easy = nn::state_of(*g_ba);
    m.d_easy = nn::state_of(*d_a);
    m.d_hard = nn::state_of(*d_b);
    return m;
  };
  result.model = snapshot(0);

  Rng rng(derive_seed(config.seed, "translator:train"));
  ImagePool pool_a(config.pool_size, rng), pool_b(config.pool_size, rng);
  const int bs = config.batch_size;
  const std::size_t larger = std::max(easy.size(), hard.size());
  const int steps = config.steps_per_epoch > 0
                        ? config.steps_per_epoch
                        : static_cast<int>((larger + static_cast<std::size_t>(bs) - 1) / bs);
  const double w_cyc = config.lambda_cycle;
  const double w_id = config.identity_weight();
  const auto form = config.adversarial;

  std::vector<std::size_t> order_a(easy.size()), order_b(hard.size());
  for (std::size_t i = 0; i < order_a.size(); ++i) order_a[i] = i;
  for (std::size_t i = 0; i < order_b.size(); ++i) order_b[i] = i;
  std::size_t pos_a = order_a.size(), pos_b = order_b.size();
  auto next_batch = [&](const std::vector<Image>& set, std::vector<std::size_t>& order, std::size_t& pos) {
    std::vector<const Image*> batch;
    for (int i = 0; i < bs; ++i) {
      if (pos >= order.size()) {
        shuffle(order, rng);
        pos = 0;
      }
      batch.push_back(&set[order[pos++]]);
    }
    return to_batch(batch);
  };

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double factor = config.lr_factor(epoch);
    opt_g.set_lr(config.lr_generator * factor);
    opt_d.set_lr(config.lr_discriminator * factor);
    EpochTrace trace;
    trace.epoch = epoch + 1;
    trace.lr_factor = factor;
    for (int step = 0; step < steps; ++step) {
      const nn::Tensor real_a = next_batch(easy, order_a, pos_a);
      const nn::Tensor real_b = next_batch(hard, order_b, pos_b);
      nn::Tensor grad, grad_cyc;

      // Generators.
      opt_g.zero_grad();
      double adv = 0.0, cyc = 0.0, idt = 0.0;
      const nn::Tensor fake_b = g_ab->forward(real_a, true);
      {
        adv += adversarial_loss(form, d_b->forward(fake_b, true), true, grad, 1.0);
        nn::Tensor g_fake = d_b->backward(grad);
        const nn::Tensor rec_a = g_ba->forward(fake_b, true);
        cyc += w_cyc * nn::l1_loss(rec_a, real_a, grad_cyc, w_cyc);
        nn::add_inplace(g_fake, g_ba->backward(grad_cyc));
        g_ab->backward(g_fake);
      }
      const nn::Tensor fake_a = g_ba->forward(real_b, true);
      {
        adv += adversarial_loss(form, d_a->forward(fake_a, true), true, grad, 1.0);
        nn::Tensor g_fake = d_a->backward(grad);
        const nn::Tensor rec_b = g_ab->forward(fake_a, true);
        cyc += w_cyc * nn::l1_loss(rec_b, real_b, grad_cyc, w_cyc);
        nn::add_inplace(g_fake, g_ab->backward(grad_cyc));
        g_ba->backward(g_fake);
      }
      if (w_id > 0) {
        idt += w_id * nn::l1_loss(g_ab->forward(real_b, true), real_b, grad, w_id);
        g_ab->backward(grad);
        idt += w_id * nn::l1_loss(g_ba->forward(real_a, true), real_a, grad, w_id);
        g_ba->backward(grad);
      }

      // Discriminators, on real images and on pooled fakes.
      double dl = 0.0;
      opt_d.zero_grad();
      const nn::Tensor pooled_b = pool_b.query(fake_b);
      const nn::Tensor pooled_a = pool_a.query(fake_a);
      for (auto [d, real, fake] : {std::tuple{d_b.get(), &real_b, &pooled_b}, std::tuple{d_a.get(), &real_a, &pooled_a}}) {
        dl += 0.5 * adversarial_loss(form, d->forward(*real, true), true, grad, 0.5);
        d->backward(grad);
        dl += 0.5 * adversarial_loss(form, d->forward(*fake, true), false, grad, 0.5);
        d->backward(grad);
      }

      if (!finite(adv) || !finite(cyc) || !finite(idt) || !finite(dl)) {
        result.aborted = true;
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(step + 1);
        return result;
      }
      opt_g.step();
      opt_d.step();
      trace.adversarial += adv;
      trace.cycle += cyc;
      trace.identity += idt;
      trace.discriminator += dl;
    }
    trace.adversarial /= steps;
    trace.cycle /= steps;
    trace.identity /= steps;
    trace.discriminator /= steps;
    result.traces.push_back(trace);
    result.model = snapshot(epoch + 1);
    if (on_epoch) on_epoch(trace);
  }
  for (auto* net : {g_ab.get(), g_ba.get(), d_a.get(), d_b.get()}) net->clear_cache();
  return result;
}

Translator::Translator(const TranslatorModel& model, bool easy_to_hard) : side_(model.config.generator.image_side) {
  Rng rng(0);
  net_ = nn::build_generator(model.config.generator, rng);
  nn::load_state(*net_, easy_to_hard ? model.g_easy_to_hard : model.g_hard_to_easy);
}

Translator::~Translator() = default;
Translator::Translator(Translator&&) noexcept = default;
Translator& Translator::operator=(Translator&&) noexcept = default;

std::vector<Image> Translator::apply(const std::vector<Image>& images, int batch_size) const {
  for (const auto& img : images)
    if (img.height != side_ || img.width != side_)
      throw ValidationError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                            ", translator expects side " + std::to_string(side_));
  std::vector<Image> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<const Image*> batch;
    for (std::size_t i = start; i < std::min(images.size(), start + static_cast<std::size_t>(batch_size)); ++i)
      batch.push_back(&images[i]);
    const nn::Tensor y = net_->forward(to_batch(batch), false);
    for (int i = 0; i < y.n; ++i) out.push_back(to_image(y, i));
  }
  net_->clear_cache();
  return out;
}

std::vector<GeneratedImage> translate(const TranslatorModel& model, const std::vector<Image>& images,
                                      const std::vector<std::string>& source_ids) {
  if (images.size() != source_ids.size()) throw ValidationError("translate: images and ids differ in length");
  const Translator t(model);
  std::vector<Image> outputs = t.apply(images);
  const std::string h = model.hash();
  std::vector<GeneratedImage> out;
  out.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i)
    out.push_back({"gen:" + source_ids[i], source_ids[i], model.class_id, model.phi, h, std::move(outputs[i])});
  return out;
}

void write_traces(const std::vector<EpochTrace>& traces, const std::string& path) {
  tsv::Table t;
  t.header = {"epoch", "lr_factor", "adversarial", "cycle", "identity", "discriminator"};
  for (const auto& e : traces)
    t.rows.push_back({0,
                      {std::to_string(e.epoch), tsv::fmt(e.lr_factor, 6), tsv::fmt(e.adversarial, 6),
                       tsv::fmt(e.cycle, 6), tsv::fmt(e.identity, 6), tsv::fmt(e.discriminator, 6)}});
  tsv::write_table(path, t);
}

}  // namespace difftrans::translator
