#include "splab/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "splab/losses.hpp"

namespace splab {

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0)) throw Error("attack: epsilon must be >= 0");
  if (iterations > 0 && !(step_size > 0.0)) throw Error("attack: step size must be > 0 when iterations > 0");
  if (!(clip_lo < clip_hi)) throw Error("attack: empty clip range");
  if (!(cw_kappa >= 0.0)) throw Error("attack: kappa must be >= 0");
}

double perturbation_norm(std::span<const double> delta, Norm norm) {
  switch (norm) {
    case Norm::l1: return norm1(delta);
    case Norm::l2: return norm2(delta);
    case Norm::linf: return norm_inf(delta);
  }
  return 0.0;
}

void project_to_ball(std::span<double> delta, Norm norm, double eps) {
  switch (norm) {
    case Norm::linf:
      for (double& v : delta) v = std::clamp(v, -eps, eps);
      return;
    case Norm::l2: {
      const double n = norm2(delta);
      if (n > eps) {
        const double s = eps / n;
        for (double& v : delta) v *= s;
      }
      return;
    }
    case Norm::l1: {
      if (norm1(delta) <= eps) return;
      if (eps == 0.0) {
        std::fill(delta.begin(), delta.end(), 0.0);
        return;
      }
      // Sorted-threshold projection onto the simplex of |delta|.
      Vec mag(delta.size());
      for (std::size_t i = 0; i < delta.size(); ++i) mag[i] = std::abs(delta[i]);
      Vec sorted = mag;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      double cumsum = 0.0, theta = 0.0;
      for (std::size_t j = 0; j < sorted.size(); ++j) {
        cumsum += sorted[j];
        const double t = (cumsum - eps) / static_cast<double>(j + 1);
        if (sorted[j] - t > 0.0) theta = t;
      }
      for (std::size_t i = 0; i < delta.size(); ++i) {
        const double m = std::max(mag[i] - theta, 0.0);
        delta[i] = delta[i] < 0.0 ? -m : m;
      }
      // Guard against rounding pushing the norm a hair above eps.
      const double n = norm1(delta);
      if (n > eps) {
        const double s = eps / n;
        for (double& v : delta) v *= s;
      }
      return;
    }
  }
}

namespace {

Vec ascent_direction(std::span<const double> g, Norm norm) {
  Vec dir(g.size(), 0.0);
  switch (norm) {
    case Norm::linf:
      for (std::size_t i = 0; i < g.size(); ++i) dir[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      break;
    case Norm::l2: {
      const double n = norm2(g);
      if (n > 0.0)
        for (std::size_t i = 0; i < g.size(); ++i) dir[i] = g[i] / n;
      break;
    }
    case Norm::l1: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < g.size(); ++i)
        if (std::abs(g[i]) > std::abs(g[best])) best = i;
      if (!g.empty() && g[best] != 0.0) dir[best] = g[best] > 0.0 ? 1.0 : -1.0;
      break;
    }
  }
  return dir;
}

Vec random_start(std::size_t n, Norm norm, double eps, Rng& rng) {
  Vec d(n, 0.0);
  if (eps == 0.0) return d;
  switch (norm) {
    case Norm::linf:
      for (double& v : d) v = rng.uniform(-eps, eps);
      break;
    case Norm::l2: {
      for (double& v : d) v = rng.normal();
      const double nrm = norm2(d);
      const double r = eps * rng.uniform();
      if (nrm > 0.0)
        for (double& v : d) v *= r / nrm;
      break;
    }
    case Norm::l1: {
      for (double& v : d) {
        const double e = -std::log(1.0 - rng.uniform());
        v = rng.uniform() < 0.5 ? -e : e;
      }
      const double nrm = norm1(d);
      const double r = eps * rng.uniform();
      if (nrm > 0.0)
        for (double& v : d) v *= r / nrm;
      break;
    }
  }
  return d;
}

void place(std::span<const double> x, std::span<double> delta, const AttackSpec& spec, Vec& out) {
  project_to_ball(delta, spec.norm, spec.epsilon);
  out.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + delta[i], spec.clip_lo, spec.clip_hi);
}

}  // namespace

AttackObjective::AttackObjective(const Network& student_, const Network* teacher_, std::span<const double> x,
                                 std::optional<std::size_t> label_, const AttackSpec& spec_)
    : student(student_), teacher(teacher_), spec(spec_) {
  spec.validate();
  const bool needs_teacher_logits =
      spec.loss == AttackLoss::l2_logits || spec.loss == AttackLoss::linf_logit_gap;
  if (spec.mode == AttackMode::oracle) {
    if (!teacher) throw Error("attack: oracle mode requires a teacher");
    return;
  }
  if (teacher) {
    clean_teacher_logits = logits(*teacher, x);
    label = label_ ? *label_ : argmax(clean_teacher_logits);
  } else {
    if (needs_teacher_logits) throw Error("attack: data mode with a logit loss requires a teacher");
    if (!label_) throw Error("attack: data mode requires a label");
    label = *label_;
  }
}

std::pair<double, Vec> AttackObjective::value_and_grad(std::span<const double> x) const {
  const auto fs = forward(student, x, true);
  ForwardResult ft;
  std::span<const double> target;
  std::size_t y = label;
  if (spec.mode == AttackMode::oracle) {
    ft = forward(*teacher, x, true);
    target = ft.logits;
    y = argmax(ft.logits);
  } else {
    target = clean_teacher_logits;
  }

  LossValue lv;
  bool through_teacher = false;
  switch (spec.loss) {
    case AttackLoss::l2_logits:
      lv = l2_logit_loss(fs.logits, target);
      through_teacher = true;
      break;
    case AttackLoss::linf_logit_gap:
      lv = linf_logit_gap(fs.logits, target);
      through_teacher = true;
      break;
    case AttackLoss::cross_entropy:
      lv = cross_entropy(fs.logits, y);
      break;
    case AttackLoss::cw_margin:
      lv = cw_margin_loss(fs.logits, y, spec.cw_kappa);
      break;
  }

  Vec grad = backward(student, fs, lv.grad, {.params = false, .input = true}).input_grad;
  if (spec.mode == AttackMode::oracle && through_teacher) {
    // Both losses depend on s − t, so the teacher-side gradient is −∂L/∂s.
    const Vec tgrad = scaled(lv.grad, -1.0);
    const Vec gt = backward(*teacher, ft, tgrad, {.params = false, .input = true}).input_grad;
    axpy(1.0, gt, grad);
  }
  return {lv.value, std::move(grad)};
}

double AttackObjective::value(std::span<const double> x) const {
  const Vec s = logits(student, x);
  if (spec.mode == AttackMode::oracle) {
    const Vec t = logits(*teacher, x);
    switch (spec.loss) {
      case AttackLoss::l2_logits: return l2_logit_loss(s, t).value;
      case AttackLoss::linf_logit_gap: return linf_logit_gap(s, t).value;
      case AttackLoss::cross_entropy: return cross_entropy(s, argmax(t)).value;
      case AttackLoss::cw_margin: return cw_margin_loss(s, argmax(t), spec.cw_kappa).value;
    }
  }
  switch (spec.loss) {
    case AttackLoss::l2_logits: return l2_logit_loss(s, clean_teacher_logits).value;
    case AttackLoss::linf_logit_gap: return linf_logit_gap(s, clean_teacher_logits).value;
    case AttackLoss::cross_entropy: return cross_entropy(s, label).value;
    case AttackLoss::cw_margin: return cw_margin_loss(s, label, spec.cw_kappa).value;
  }
  return 0.0;
}

AdvResult pgd(const Network& student, const Network* teacher, std::span<const double> x,
              std::optional<std::size_t> label, const AttackSpec& spec, Rng& rng) {
  const AttackObjective objective(student, teacher, x, label, spec);
  AdvResult res;
  Vec delta = spec.random_init ? random_start(x.size(), spec.norm, spec.epsilon, rng) : Vec(x.size(), 0.0);
  place(x, delta, spec, res.x_adv);

  for (std::size_t t = 0; t < spec.iterations; ++t) {
    auto [loss, grad] = objective.value_and_grad(res.x_adv);
    res.loss_trace.push_back(loss);
    const Vec dir = ascent_direction(grad, spec.norm);
    for (std::size_t i = 0; i < x.size(); ++i) delta[i] = res.x_adv[i] + spec.step_size * dir[i] - x[i];
    place(x, delta, spec, res.x_adv);
  }
  res.final_loss = objective.value(res.x_adv);
  return res;
}

AdvResult fgsm(const Network& student, const Network* teacher, std::span<const double> x,
               std::optional<std::size_t> label, double epsilon, AttackMode mode, AttackLoss loss, double clip_lo,
               double clip_hi) {
  AttackSpec spec;
  spec.norm = Norm::linf;
  spec.epsilon = epsilon;
  spec.step_size = epsilon > 0.0 ? epsilon : 1.0;
  spec.iterations = 1;
  spec.mode = mode;
  spec.loss = loss;
  spec.random_init = false;
  spec.clip_lo = clip_lo;
  spec.clip_hi = clip_hi;
  Rng unused(0);
  return pgd(student, teacher, x, label, spec, unused);
}

AdvResult cw_attack(const Network& student, const Network* teacher, std::span<const double> x,
                    std::optional<std::size_t> label, AttackSpec spec, Rng& rng) {
  spec.norm = Norm::l2;
  spec.loss = AttackLoss::cw_margin;
  return pgd(student, teacher, x, label, spec, rng);
}

CcatAttackResult ccat_confidence_attack(const Network& student, const Network& teacher, std::span<const double> x,
                                        AttackSpec spec, Rng& rng) {
  spec.norm = Norm::linf;
  spec.mode = AttackMode::oracle;
  spec.loss = AttackLoss::linf_logit_gap;
  CcatAttackResult out;
  out.adv = pgd(student, &teacher, x, std::nullopt, spec, rng);
  out.delta = sub(out.adv.x_adv, x);
  out.delta_linf = norm_inf(out.delta);
  return out;
}

InOutSplit in_out_plane_split(const Network& student, const Network* teacher, std::span<const double> x,
                              std::optional<std::size_t> label, const AttackSpec& spec,
                              const SubspaceBasis& basis, Rng& first, Rng& second) {
  AttackSpec s = spec;
  s.random_init = true;
  AdvResult a = pgd(student, teacher, x, label, s, first);
  AdvResult b = pgd(student, teacher, x, label, s, second);
  a.subspace_distance = distance_to_subspace(basis, a.x_adv);
  b.subspace_distance = distance_to_subspace(basis, b.x_adv);
  if (*b.subspace_distance < *a.subspace_distance) return {std::move(b), std::move(a)};
  return {std::move(a), std::move(b)};
}

InOutSplit in_out_plane_split(const Network& student, const Network* teacher, std::span<const double> x,
                              std::optional<std::size_t> label, const AttackSpec& spec,
                              const SubspaceBasis& basis, Rng& rng) {
  Rng first = rng.derive(0);
  Rng second = rng.derive(1);
  return in_out_plane_split(student, teacher, x, label, spec, basis, first, second);
}

AdvResult transfer_attack(const Network& surrogate, const Network& victim, const Network* teacher,
                          std::span<const double> x, std::optional<std::size_t> label, const AttackSpec& spec,
                          Rng& rng) {
  AdvResult res = pgd(surrogate, teacher, x, label, spec, rng);
  res.final_loss = AttackObjective(victim, teacher, x, label, spec).value(res.x_adv);
  return res;
}

double robust_accuracy(const Network& student, const Network& teacher, const std::vector<Vec>& inputs,
                       const AttackSpec& spec, std::uint64_t seed, const RobustEvalOptions& opts) {
  if (inputs.empty()) return 0.0;
  const Rng base(seed);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = base.derive(i);
    const auto& x = inputs[i];
    Vec xa;
    switch (opts.kind) {
      case AttackKind::pgd:
        xa = pgd(student, &teacher, x, std::nullopt, spec, rng).x_adv;
        break;
      case AttackKind::fgsm:
        xa = fgsm(student, &teacher, x, std::nullopt, spec.epsilon, spec.mode, spec.loss, spec.clip_lo, spec.clip_hi)
                 .x_adv;
        break;
      case AttackKind::cw:
        xa = cw_attack(student, &teacher, x, std::nullopt, spec, rng).x_adv;
        break;
      case AttackKind::transfer:
        if (!opts.surrogate) throw Error("robust_accuracy: transfer attack needs a surrogate");
        xa = transfer_attack(*opts.surrogate, student, &teacher, x, std::nullopt, spec, rng).x_adv;
        break;
      case AttackKind::in_plane:
      case AttackKind::out_plane: {
        if (!opts.basis) throw Error("robust_accuracy: in/out-plane attack needs a basis");
        auto split = in_out_plane_split(student, &teacher, x, std::nullopt, spec, *opts.basis, rng);
        xa = opts.kind == AttackKind::in_plane ? std::move(split.in_plane.x_adv) : std::move(split.out_plane.x_adv);
        break;
      }
    }
    if (argmax(logits(student, xa)) == argmax(logits(teacher, xa))) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(inputs.size());
}

double clean_agreement(const Network& student, const Network& teacher, const std::vector<Vec>& inputs) {
  if (inputs.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& x : inputs)
    if (argmax(logits(student, x)) == argmax(logits(teacher, x))) ++ok;
  return static_cast<double>(ok) / static_cast<double>(inputs.size());
}

}  // namespace splab
