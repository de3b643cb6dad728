#pragma once

#include <limits>
#include <optional>
#include <utility>

#include "splab/linalg.hpp"
#include "splab/network.hpp"
#include "splab/rng.hpp"

namespace splab {

enum class Norm { l1, l2, linf };
enum class AttackMode { oracle, data };
enum class AttackLoss { l2_logits, cross_entropy, cw_margin, linf_logit_gap };

struct AttackSpec {
  Norm norm = Norm::linf;
  double epsilon = 10.0 / 255.0;
  double step_size = 0.01;
  std::size_t iterations = 40;
  AttackMode mode = AttackMode::oracle;
  AttackLoss loss = AttackLoss::l2_logits;
  bool random_init = true;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  double cw_kappa = 0.0;

  /// Throws Error on a negative budget, zero step with iterations, or an empty clip range.
  void validate() const;
  static AttackSpec unclipped(AttackSpec s) {
    s.clip_lo = -std::numeric_limits<double>::infinity();
    s.clip_hi = std::numeric_limits<double>::infinity();
    return s;
  }
};

struct AdvResult {
  Vec x_adv;
  Vec loss_trace;  // objective at each iterate before its step
  double final_loss = 0.0;
  std::optional<double> subspace_distance;
};

/// Euclidean projection of delta onto the eps-ball of the given norm.
void project_to_ball(std::span<double> delta, Norm norm, double eps);
double perturbation_norm(std::span<const double> delta, Norm norm);

/// Attack objective and its input gradient. Oracle mode differentiates
/// through both networks; data mode holds the teacher's clean output fixed.
struct AttackObjective {
  const Network& student;
  const Network* teacher;
  AttackSpec spec;
  std::size_t label = 0;  // data-mode label, or unused
  Vec clean_teacher_logits;

  AttackObjective(const Network& student, const Network* teacher, std::span<const double> x,
                  std::optional<std::size_t> label, const AttackSpec& spec);
  std::pair<double, Vec> value_and_grad(std::span<const double> x) const;
  double value(std::span<const double> x) const;
};

/// Projected gradient ascent inside B(x, eps) intersected with the clip box.
AdvResult pgd(const Network& student, const Network* teacher, std::span<const double> x,
              std::optional<std::size_t> label, const AttackSpec& spec, Rng& rng);

/// One l∞ sign step of size eps (pgd with T=1, alpha=eps, no random init).
AdvResult fgsm(const Network& student, const Network* teacher, std::span<const double> x,
               std::optional<std::size_t> label, double epsilon, AttackMode mode,
               AttackLoss loss = AttackLoss::l2_logits, double clip_lo = 0.0, double clip_hi = 1.0);

/// l2 PGD on the CW margin loss (kappa from spec).
AdvResult cw_attack(const Network& student, const Network* teacher, std::span<const double> x,
                    std::optional<std::size_t> label, AttackSpec spec, Rng& rng);

struct CcatAttackResult {
  AdvResult adv;
  Vec delta;
  double delta_linf = 0.0;
};

/// l∞ PGD maximizing max_k |s_k(x+δ) − t_k(x+δ)|.
CcatAttackResult ccat_confidence_attack(const Network& student, const Network& teacher, std::span<const double> x,
                                        AttackSpec spec, Rng& rng);

struct InOutSplit {
  AdvResult in_plane;
  AdvResult out_plane;
};

/// Two PGD runs from independent random starts; the one closer to the input
/// subspace is the in-plane example. Ties go to the first run.
InOutSplit in_out_plane_split(const Network& student, const Network* teacher, std::span<const double> x,
                              std::optional<std::size_t> label, const AttackSpec& spec,
                              const SubspaceBasis& basis, Rng& first, Rng& second);
InOutSplit in_out_plane_split(const Network& student, const Network* teacher, std::span<const double> x,
                              std::optional<std::size_t> label, const AttackSpec& spec,
                              const SubspaceBasis& basis, Rng& rng);

/// Adversarial example crafted on `surrogate`; final_loss is the victim's objective.
AdvResult transfer_attack(const Network& surrogate, const Network& victim, const Network* teacher,
                          std::span<const double> x, std::optional<std::size_t> label, const AttackSpec& spec,
                          Rng& rng);

enum class AttackKind { pgd, fgsm, cw, transfer, in_plane, out_plane };

struct RobustEvalOptions {
  AttackKind kind = AttackKind::pgd;
  const Network* surrogate = nullptr;      // transfer
  const SubspaceBasis* basis = nullptr;    // in/out-plane
};

/// Fraction of inputs whose adversarial example keeps the student's argmax
/// equal to the teacher's argmax at that example. Sample i uses the stream
/// Rng(seed).derive(i).
double robust_accuracy(const Network& student, const Network& teacher, const std::vector<Vec>& inputs,
                       const AttackSpec& spec, std::uint64_t seed, const RobustEvalOptions& opts = {});

/// Fraction of inputs where argmax student(x) = argmax teacher(x).
double clean_agreement(const Network& student, const Network& teacher, const std::vector<Vec>& inputs);

}  // namespace splab
