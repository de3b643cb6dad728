#include "splab/training.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "splab/csv.hpp"
#include "splab/losses.hpp"
#include "splab/specialization.hpp"

namespace splab {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::st_logit: return "st_logit";
    case Regime::st_label: return "st_label";
    case Regime::at_label_target: return "at_label_target";
    case Regime::at_teacher_target: return "at_teacher_target";
    case Regime::ccat: return "ccat";
    case Regime::rft: return "rft";
  }
  return "unknown";
}

Regime regime_from_string(const std::string& s) {
  for (auto r : {Regime::st_logit, Regime::st_label, Regime::at_label_target, Regime::at_teacher_target,
                 Regime::ccat, Regime::rft})
    if (to_string(r) == s) return r;
  throw Error("unknown regime '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error("train config: epochs must be >= 1");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error("train config: learning_rate must be >= 0");
  if (regime == Regime::ccat && !(ccat_rho > 0.0)) throw Error("train config: ccat requires rho > 0");
  if (regime == Regime::rft && !(rft_alpha >= 0.0)) throw Error("train config: rft alpha must be >= 0");
  if (regime == Regime::at_label_target || regime == Regime::at_teacher_target || regime == Regime::ccat)
    attack.validate();
}

double TrainConfig::lr_at(std::size_t epoch) const {
  if (schedule == LrSchedule::constant) return learning_rate;
  const double frac = static_cast<double>(epoch) / static_cast<double>(epochs);
  if (frac >= 0.75) return learning_rate * 0.01;
  if (frac >= 0.5) return learning_rate * 0.1;
  return learning_rate;
}

namespace {

void check_finite(double loss, const char* where, std::size_t batch_size) {
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << where << ": non-finite loss " << loss << " on a batch of " << batch_size
       << " samples; lower the learning rate or check the inputs";
    throw TrainingError(os.str());
  }
}

// Accumulates the gradient of one sample's loss at its logits.
void accumulate(const Network& student, const ForwardResult& fs, const Vec& loss_grad, Gradients& acc) {
  const auto br = backward(student, fs, loss_grad, {.params = true, .input = false});
  acc.add(br.params);
}

StepResult finish_step(Network& student, Gradients& acc, double loss_sum, std::size_t n, double lr,
                       const char* where) {
  const double inv = 1.0 / static_cast<double>(n);
  StepResult res;
  res.loss = loss_sum * inv;
  check_finite(res.loss, where, n);
  acc.scale(inv);
  if (lr != 0.0) sgd_update(student, acc, lr);
  return res;
}

}  // namespace

StepResult st_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                   const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw Error("st_step: empty batch");
  Gradients acc = Gradients::zeros_like(student);
  double loss_sum = 0.0;
  for (const auto& x : batch) {
    const auto fs = forward(student, x, true);
    const Vec t = logits(teacher, x);
    const LossValue lv = cfg.regime == Regime::st_label ? cross_entropy(fs.logits, argmax(t))
                                                        : l2_logit_loss(fs.logits, t);
    loss_sum += lv.value;
    accumulate(student, fs, lv.grad, acc);
  }
  return finish_step(student, acc, loss_sum, batch.size(), lr, "st_step");
}

StepResult at_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                   const TrainConfig& cfg, double lr, const Rng& rng) {
  if (batch.empty()) throw Error("at_step: empty batch");
  AttackSpec spec = cfg.attack;
  spec.mode = AttackMode::oracle;
  Gradients acc = Gradients::zeros_like(student);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& x = batch[i];
    Rng sample_rng = rng.derive(i);
    const Vec xa = pgd(student, &teacher, x, std::nullopt, spec, sample_rng).x_adv;
    const auto fs = forward(student, xa, true);
    LossValue lv;
    if (cfg.regime == Regime::at_label_target) {
      lv = cross_entropy(fs.logits, argmax(logits(teacher, x)));
    } else {
      lv = l2_logit_loss(fs.logits, logits(teacher, xa));
    }
    loss_sum += lv.value;
    accumulate(student, fs, lv.grad, acc);
  }
  return finish_step(student, acc, loss_sum, batch.size(), lr, "at_step");
}

double ccat_lambda(double delta_linf, double epsilon, double rho) {
  if (epsilon <= 0.0) return 1.0;
  return std::pow(1.0 - std::min(1.0, delta_linf / epsilon), rho);
}

Vec ccat_soft_label(double lambda, std::size_t label, std::size_t classes) {
  if (label >= classes) throw ShapeError("ccat_soft_label: label out of range");
  Vec y(classes, (1.0 - lambda) / static_cast<double>(classes));
  y[label] += lambda;
  return y;
}

StepResult ccat_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                     const TrainConfig& cfg, double lr, const Rng& rng) {
  if (batch.empty()) throw Error("ccat_step: empty batch");
  if (!(cfg.ccat_rho > 0.0)) throw Error("ccat_step: rho must be > 0");
  Gradients acc = Gradients::zeros_like(student);
  double loss_sum = 0.0;
  std::vector<Vec> soft;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& x = batch[i];
    Rng sample_rng = rng.derive(i);
    const auto att = ccat_confidence_attack(student, teacher, x, cfg.attack, sample_rng);
    const double lambda = ccat_lambda(att.delta_linf, cfg.attack.epsilon, cfg.ccat_rho);
    Vec y = ccat_soft_label(lambda, argmax(logits(teacher, x)), student.output_dim());
    const auto fs = forward(student, att.adv.x_adv, true);
    const LossValue lv = soft_cross_entropy(fs.logits, y);
    loss_sum += lv.value;
    accumulate(student, fs, lv.grad, acc);
    soft.push_back(std::move(y));
  }
  StepResult res = finish_step(student, acc, loss_sum, batch.size(), lr, "ccat_step");
  res.soft_labels = std::move(soft);
  return res;
}

Vec PenultimateFeatures::eval(std::span<const double> x) const {
  if (net_.layers.size() < 2) throw Error("penultimate features need a hidden layer");
  const auto f = forward(net_, x, true);
  return f.activations[net_.layers.size() - 2];
}

Vec PenultimateFeatures::vjp(std::span<const double> x, std::span<const double> g) const {
  const auto f = forward(net_, x, true);
  return backward_from(net_, f, net_.layers.size() - 2, g, {.params = false, .input = true}).input_grad;
}

double robust_feature_objective(std::span<const double> x_r, std::span<const double> x_target,
                                const FeatureMap& rep, const Network* teacher, double alpha) {
  const Vec df = sub(rep.eval(x_r), rep.eval(x_target));
  double obj = dot(df, df);
  if (alpha != 0.0) {
    if (!teacher) throw Error("robust feature: alpha > 0 requires a teacher");
    const Vec dt = sub(logits(*teacher, x_r), logits(*teacher, x_target));
    obj += alpha * dot(dt, dt);
  }
  return obj;
}

RobustFeatureResult gen_robust_feature(std::span<const double> x_target, const FeatureMap& rep,
                                       const Network* teacher, const RobustFeatureOptions& opts, Rng& rng,
                                       std::optional<Vec> init) {
  if (opts.alpha != 0.0 && !teacher) throw Error("robust feature: alpha > 0 requires a teacher");
  RobustFeatureResult res;
  if (init) {
    if (init->size() != x_target.size()) throw ShapeError("robust feature: init has the wrong length");
    res.x_r = std::move(*init);
  } else {
    res.x_r.resize(x_target.size());
    const double lo = std::isfinite(opts.clip_lo) ? opts.clip_lo : 0.0;
    const double hi = std::isfinite(opts.clip_hi) ? opts.clip_hi : 1.0;
    for (double& v : res.x_r) v = rng.uniform(lo, hi);
  }
  const Vec target_features = rep.eval(x_target);
  const Vec target_logits = teacher ? logits(*teacher, x_target) : Vec{};

  auto objective_and_grad = [&](std::span<const double> xr, Vec* grad) {
    const Vec df = sub(rep.eval(xr), target_features);
    double obj = dot(df, df);
    if (grad) *grad = scaled(rep.vjp(xr, df), 2.0);
    if (opts.alpha != 0.0) {
      const auto ft = forward(*teacher, xr, grad != nullptr);
      const Vec dt = sub(ft.logits, target_logits);
      obj += opts.alpha * dot(dt, dt);
      if (grad) {
        const Vec gt = backward(*teacher, ft, scaled(dt, 2.0 * opts.alpha), {.params = false, .input = true}).input_grad;
        axpy(1.0, gt, *grad);
      }
    }
    return obj;
  };

  Vec grad;
  double prev = objective_and_grad(res.x_r, nullptr);
  res.objective = prev;
  int rising = 0;
  for (std::size_t s = 0; s < opts.steps; ++s) {
    if (res.objective <= opts.tolerance) break;
    objective_and_grad(res.x_r, &grad);
    for (std::size_t i = 0; i < res.x_r.size(); ++i)
      res.x_r[i] = std::clamp(res.x_r[i] - opts.step_size * grad[i], opts.clip_lo, opts.clip_hi);
    const double cur = objective_and_grad(res.x_r, nullptr);
    if (!std::isfinite(cur)) throw TrainingError("robust feature: objective became non-finite");
    rising = cur > prev ? rising + 1 : 0;
    if (rising >= 10) throw TrainingError("robust feature: objective increased for 10 consecutive steps");
    prev = cur;
    res.objective = cur;
    res.steps_taken = s + 1;
  }
  return res;
}

std::vector<Vec> robust_feature_dataset(const std::vector<Vec>& inputs, const Network& robust_model,
                                        const Network& teacher, const RobustFeatureOptions& opts,
                                        std::uint64_t seed) {
  const PenultimateFeatures rep(robust_model);
  const Rng base(seed);
  std::vector<Vec> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = base.derive(i);
    out.push_back(gen_robust_feature(inputs[i], rep, &teacher, opts, rng).x_r);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const Network& teacher, Network student, const std::vector<Vec>& data,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (data.empty()) throw Error("train: empty dataset");
  const Rng root(cfg.seed);
  const Rng shuffle_root = root.derive(0);
  const Rng attack_root = root.derive(1);
  const Rng augment_root = root.derive(2);
  const bool images = student.input_shape.size() == 3;

  TrainResult res;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = shuffle_root.derive(epoch);
    const auto order = shuffle_rng.permutation(data.size());
    const double lr = cfg.lr_at(epoch);
    const Rng epoch_attack = attack_root.derive(epoch);
    const Rng epoch_augment = augment_root.derive(epoch);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<Vec> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t p = start; p < end; ++p) {
        Vec x = data[order[p]];
        if (images && !cfg.augmentations.empty()) {
          Rng aug_rng = epoch_augment.derive(p);
          for (auto kind : cfg.augmentations) x = augment(x, student.input_shape, kind, aug_rng, cfg.augment_options);
        }
        batch.push_back(std::move(x));
      }
      const Rng batch_rng = epoch_attack.derive(start / cfg.batch_size);
      StepResult step;
      switch (cfg.regime) {
        case Regime::st_logit:
        case Regime::st_label:
          step = st_step(student, teacher, batch, cfg, lr);
          break;
        case Regime::rft: {
          TrainConfig st = cfg;
          st.regime = Regime::st_logit;
          step = st_step(student, teacher, batch, st, lr);
          break;
        }
        case Regime::at_label_target:
        case Regime::at_teacher_target:
          step = at_step(student, teacher, batch, cfg, lr, batch_rng);
          break;
        case Regime::ccat:
          step = ccat_step(student, teacher, batch, cfg, lr, batch_rng);
          break;
      }
      loss_sum += step.loss;
      ++batches;
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.regime = cfg.regime;
    m.loss = loss_sum / static_cast<double>(batches);
    if (hooks.eval_set && !hooks.eval_set->empty()) {
      m.clean_agreement = clean_agreement(student, teacher, *hooks.eval_set);
      if (hooks.robust_eval) {
        const std::size_t n = std::min(hooks.robust_eval_count, hooks.eval_set->size());
        const std::vector<Vec> subset(hooks.eval_set->begin(), hooks.eval_set->begin() + static_cast<std::ptrdiff_t>(n));
        m.robust_accuracy = robust_accuracy(student, teacher, subset, *hooks.robust_eval, cfg.seed);
      }
      if (hooks.nc_summary) {
        const auto report = nc_report(student, teacher, *hooks.eval_set);
        for (const auto& layer : report.layers) m.mbnc.push_back(layer.mbnc);
      }
    }
    res.history.push_back(std::move(m));
    if (hooks.on_epoch) hooks.on_epoch(epoch + 1, student);
  }
  res.student = std::move(student);
  return res;
}

TrainResult rft_finetune(const TrainConfig& cfg, const Network& teacher, const Network& robust_model,
                         Network base_student, const std::vector<Vec>& data, const RobustFeatureOptions& rf_opts,
                         const TrainHooks& hooks) {
  RobustFeatureOptions opts = rf_opts;
  opts.alpha = cfg.rft_alpha;
  const auto robust_data = robust_feature_dataset(data, robust_model, teacher, opts, cfg.seed);
  TrainConfig c = cfg;
  c.regime = Regime::rft;
  return train(c, teacher, std::move(base_student), robust_data, hooks);
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path) {
  std::size_t layers = 0;
  for (const auto& m : history) layers = std::max(layers, m.mbnc.size());
  std::vector<std::string> header = {"epoch", "regime", "loss", "clean_agreement", "robust_acc"};
  for (std::size_t l = 0; l < layers; ++l) header.push_back("mbnc_layer" + std::to_string(l));
  CsvWriter w(path, header);
  for (const auto& m : history) {
    w.field(m.epoch).field(to_string(m.regime)).field(m.loss).field(m.clean_agreement).field(m.robust_accuracy);
    for (std::size_t l = 0; l < layers; ++l) w.field(l < m.mbnc.size() ? m.mbnc[l] : std::nan(""));
    w.end_row();
  }
}

}  // namespace splab
