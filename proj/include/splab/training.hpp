#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

#include "splab/attacks.hpp"
#include "splab/data.hpp"
#include "splab/network.hpp"

namespace splab {

enum class Regime { st_logit, st_label, at_label_target, at_teacher_target, ccat, rft };
enum class LrSchedule { constant, step };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  Regime regime = Regime::st_logit;
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  LrSchedule schedule = LrSchedule::constant;
  std::uint64_t seed = 0;
  std::vector<AugmentKind> augmentations;
  AugmentOptions augment_options;
  AttackSpec attack;
  double ccat_rho = 10.0;
  double rft_alpha = 0.5;
  std::vector<std::size_t> checkpoint_epochs;

  void validate() const;
  /// Learning rate for a 0-based epoch under the configured schedule
  /// (step: x0.1 from 50% of epochs, x0.01 from 75%).
  double lr_at(std::size_t epoch) const;
};

struct StepResult {
  double loss = 0.0;
  std::vector<Vec> soft_labels;  // filled by ccat_step
};

/// One SGD step on the mean batch loss: ½‖s(x) − t(x)‖² (st_logit) or
/// CE(s(x), argmax t(x)) (st_label).
StepResult st_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                   const TrainConfig& cfg, double lr);

/// Oracle-adversarial training step. Teacher-target fits t(x'); label-target
/// fits argmax t(x) with cross-entropy. Sample i attacks with rng.derive(i).
StepResult at_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                   const TrainConfig& cfg, double lr, const Rng& rng);

/// λ(δ) = (1 − min(1, ‖δ‖∞/ε))^ρ, with λ = 1 when ε = 0.
double ccat_lambda(double delta_linf, double epsilon, double rho);
/// λ one_hot(y) + (1 − λ)/K.
Vec ccat_soft_label(double lambda, std::size_t label, std::size_t classes);

StepResult ccat_step(Network& student, const Network& teacher, const std::vector<Vec>& batch,
                     const TrainConfig& cfg, double lr, const Rng& rng);

/// Differentiable representation used for robust-feature synthesis.
class FeatureMap {
 public:
  virtual ~FeatureMap() = default;
  virtual Vec eval(std::span<const double> x) const = 0;
  /// Jᵀ g at x.
  virtual Vec vjp(std::span<const double> x, std::span<const double> g) const = 0;
};

/// Post-ReLU activations of the last hidden layer.
class PenultimateFeatures : public FeatureMap {
 public:
  explicit PenultimateFeatures(const Network& net) : net_(net) {}
  Vec eval(std::span<const double> x) const override;
  Vec vjp(std::span<const double> x, std::span<const double> g) const override;

 private:
  const Network& net_;
};

struct RobustFeatureOptions {
  double alpha = 0.5;
  std::size_t steps = 200;
  double step_size = 0.1;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  /// Stop once the objective falls below this value.
  double tolerance = 0.0;
};

struct RobustFeatureResult {
  Vec x_r;
  double objective = 0.0;
  std::size_t steps_taken = 0;
};

/// Objective α‖t(x_r) − t(x)‖² + ‖f_M(x) − f_M(x_r)‖².
double robust_feature_objective(std::span<const double> x_r, std::span<const double> x_target,
                                const FeatureMap& rep, const Network* teacher, double alpha);

/// Gradient descent on the objective from `init` (uniform noise when empty),
/// projected to the clip box. Throws TrainingError if the objective rises
/// for 10 consecutive steps.
RobustFeatureResult gen_robust_feature(std::span<const double> x_target, const FeatureMap& rep,
                                       const Network* teacher, const RobustFeatureOptions& opts, Rng& rng,
                                       std::optional<Vec> init = std::nullopt);

/// Robust feature dataset: one x_r per input, sample i uses Rng(seed).derive(i).
std::vector<Vec> robust_feature_dataset(const std::vector<Vec>& inputs, const Network& robust_model,
                                        const Network& teacher, const RobustFeatureOptions& opts,
                                        std::uint64_t seed);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  Regime regime = Regime::st_logit;
  double loss = 0.0;
  double clean_agreement = std::numeric_limits<double>::quiet_NaN();
  double robust_accuracy = std::numeric_limits<double>::quiet_NaN();
  Vec mbnc;  // per hidden layer, empty if not requested
};

struct TrainHooks {
  const std::vector<Vec>* eval_set = nullptr;
  std::optional<AttackSpec> robust_eval;
  std::size_t robust_eval_count = 256;
  bool nc_summary = false;
  /// Called after every epoch with the 1-based epoch number.
  std::function<void(std::size_t, const Network&)> on_epoch;
};

struct TrainResult {
  Network student;
  std::vector<EpochMetrics> history;
};

/// Full loop: seeded shuffling, per-sample augmentation (image inputs only),
/// per-regime steps, per-epoch metrics. rft trains like st_logit on the
/// dataset it is given (see rft_finetune).
TrainResult train(const TrainConfig& cfg, const Network& teacher, Network student, const std::vector<Vec>& data,
                  const TrainHooks& hooks = {});

/// Builds the robust feature dataset from `robust_model` and fine-tunes
/// `base_student` on it with teacher logits.
TrainResult rft_finetune(const TrainConfig& cfg, const Network& teacher, const Network& robust_model,
                         Network base_student, const std::vector<Vec>& data, const RobustFeatureOptions& rf_opts,
                         const TrainHooks& hooks = {});

void write_metrics_csv(const std::vector<EpochMetrics>& history, const std::string& path);

}  // namespace splab
