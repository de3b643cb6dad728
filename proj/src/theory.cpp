#include "splab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "splab/csv.hpp"
#include "splab/losses.hpp"
#include "splab/training.hpp"

namespace splab {

void TheorySpec::validate() const {
  if (subspace_dim < 1 || subspace_dim > ambient_dim) throw Error("theory: need 1 <= subspace_dim <= ambient_dim");
  if (teacher_hidden < 1 || (student_hidden < 1 && !copy_teacher) || classes < 1) throw Error("theory: empty layer");
  if (samples < 2) throw Error("theory: need at least two samples");
  if (!(radius > 0.0)) throw Error("theory: radius must be positive");
  if (!(learning_rate > 0.0)) throw Error("theory: learning_rate must be positive");
  if (check_every < 1) throw Error("theory: check_every must be >= 1");
}

namespace {

Vec kernel_coords(std::span<const double> w, const Matrix& U) {
  return matvec_t(U, w.first(U.rows));
}

double augmented_bias(std::span<const double> w, std::size_t d) { return w.size() > d ? w[d] : 0.0; }

}  // namespace

Network make_theory_teacher(const TheorySpec& spec, const SubspaceBasis& basis, Rng& rng) {
  const std::size_t d = spec.ambient_dim;
  const std::size_t kt = spec.teacher_hidden;
  Network net = make_dense_net(d, {kt}, spec.classes, spec.biases, rng);
  const Vec x0 = basis.offset.empty() ? Vec(d, 0.0) : basis.offset;

  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw Error("theory: could not draw non-colinear teacher weights");
    std::vector<Vec> kernels;
    for (std::size_t j = 0; j < kt; ++j) {
      Vec w(d);
      for (double& v : w) v = rng.normal();
      kernels.push_back(scaled(w, 1.0 / norm2(w)));
    }
    bool ok = true;
    for (std::size_t a = 0; a < kt && ok; ++a) {
      if (norm2(kernel_coords(kernels[a], basis.U)) < 0.3) ok = false;
      for (std::size_t b = a + 1; b < kt && ok; ++b)
        if (std::abs(projected_cos(kernels[a], kernels[b], basis.U)) > 0.9) ok = false;
    }
    if (!ok) continue;
    auto& L = net.layers[0];
    for (std::size_t j = 0; j < kt; ++j) {
      std::copy(kernels[j].begin(), kernels[j].end(), L.weight.begin() + static_cast<std::ptrdiff_t>(j * d));
      if (spec.biases) {
        const double offset = rng.uniform(-0.5, 0.5) * spec.radius;
        L.bias[j] = -dot(kernels[j], x0) + offset * norm2(kernel_coords(kernels[j], basis.U));
      }
    }
    break;
  }

  auto& V = net.layers[1];
  for (int attempt = 0;; ++attempt) {
    if (attempt > 1000) throw Error("theory: could not draw teacher fan-out weights");
    for (double& v : V.weight) v = rng.normal();
    bool ok = true;
    for (std::size_t j = 0; j < kt; ++j)
      if (norm2(node_fanout(net, 0, j)) < 0.5) ok = false;
    if (ok) break;
  }
  std::fill(V.bias.begin(), V.bias.end(), 0.0);
  return net;
}

TheoryInstance make_theory_instance(const TheorySpec& spec) {
  spec.validate();
  TheoryInstance inst;
  inst.spec = spec;
  SyntheticSpec ds;
  ds.ambient_dim = spec.ambient_dim;
  ds.subspace_dim = spec.subspace_dim;
  ds.region.kind = RegionKind::ball;
  ds.region.radius = spec.radius;
  ds.sample_count = spec.samples;
  ds.seed = spec.seed;
  inst.data = gen_synthetic(ds);
  const Rng root(spec.seed);
  Rng teacher_rng = root.derive(10);
  Rng student_rng = root.derive(11);
  inst.teacher = make_theory_teacher(spec, inst.data.basis, teacher_rng);
  inst.student = spec.copy_teacher
                     ? inst.teacher
                     : make_dense_net(spec.ambient_dim, {spec.student_hidden}, spec.classes, spec.biases, student_rng);
  inst.student_init = inst.student;
  for (std::size_t i = 0; i < inst.data.samples.rows; ++i) {
    const auto r = inst.data.samples.row(i);
    inst.inputs.emplace_back(r.begin(), r.end());
  }
  return inst;
}

double measure_g1_sup(const Network& student, const Network& teacher, const std::vector<Vec>& inputs) {
  double sup = 0.0;
  for (const auto& x : inputs) {
    const auto fs = forward(student, x, true);
    const Vec diff = sub(fs.logits, logits(teacher, x));
    const auto br = backward(student, fs, diff, {.params = false, .input = false});
    sup = std::max(sup, norm_inf(br.g1));
  }
  return sup;
}

namespace {

double mean_loss(const Network& student, const Network& teacher, const std::vector<Vec>& inputs) {
  double sum = 0.0;
  for (const auto& x : inputs) sum += l2_logit_loss(logits(student, x), logits(teacher, x)).value;
  return sum / static_cast<double>(inputs.size());
}

// Residuals s(x) - t(x) and their Jacobian with respect to the flattened
// student parameters, one row per (sample, output).
void residual_jacobian(const Network& student, const Network& teacher, const std::vector<Vec>& inputs,
                       const std::vector<Vec>& targets, Matrix& J, Vec& r) {
  const std::size_t C = student.output_dim();
  const std::size_t P = student.parameter_count();
  J = Matrix(inputs.size() * C, P);
  r.assign(inputs.size() * C, 0.0);
  Vec e(C, 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto fs = forward(student, inputs[i], true);
    for (std::size_t c = 0; c < C; ++c) {
      r[i * C + c] = fs.logits[c] - targets[i][c];
      std::fill(e.begin(), e.end(), 0.0);
      e[c] = 1.0;
      const Vec g = backward(student, fs, e, {.params = true, .input = false}).params.flatten();
      std::copy(g.begin(), g.end(), J.data.begin() + static_cast<std::ptrdiff_t>((i * C + c) * P));
    }
  }
  (void)teacher;
}

// Conjugate gradients on (JᵀJ + mu I) step = -Jᵀr. Every iterate is a
// combination of rows of J, so directions the data never excites stay put.
Vec damped_gauss_newton_step(const Matrix& J, const Vec& r, double mu, std::size_t max_iter) {
  const std::size_t P = J.cols;
  Vec b = scaled(matvec_t(J, r), -1.0);
  Vec x(P, 0.0), res = b, p = b;
  double rs = dot(res, res);
  const double stop = 1e-28 * std::max(rs, 1e-300);
  for (std::size_t it = 0; it < max_iter && rs > stop; ++it) {
    Vec Ap = matvec_t(J, matvec(J, p));
    axpy(mu, p, Ap);
    const double alpha = rs / dot(p, Ap);
    axpy(alpha, p, x);
    axpy(-alpha, Ap, res);
    const double rs_new = dot(res, res);
    for (std::size_t i = 0; i < P; ++i) p[i] = res[i] + (rs_new / rs) * p[i];
    rs = rs_new;
  }
  return x;
}

}  // namespace

ConvergenceResult train_to_convergence(TheoryInstance& inst) {
  const auto& spec = inst.spec;
  ConvergenceResult res;
  TrainConfig cfg;
  cfg.regime = Regime::st_logit;
  auto record = [&](double g1) {
    res.g1_sup = g1;
    res.snapshots.push_back({res.epochs, g1, inst.student});
  };
  record(measure_g1_sup(inst.student, inst.teacher, inst.inputs));
  while (res.g1_sup > spec.g1_target && res.epochs < spec.max_epochs) {
    for (std::size_t e = 0; e < spec.check_every && res.epochs < spec.max_epochs; ++e, ++res.epochs)
      st_step(inst.student, inst.teacher, inst.inputs, cfg, spec.learning_rate);
    record(measure_g1_sup(inst.student, inst.teacher, inst.inputs));
  }

  if (res.g1_sup > spec.g1_target && spec.polish) {
    std::vector<Vec> targets;
    for (const auto& x : inst.inputs) targets.push_back(logits(inst.teacher, x));
    double loss = mean_loss(inst.student, inst.teacher, inst.inputs);
    double mu = 1e-3 * static_cast<double>(inst.inputs.size());
    Matrix J;
    Vec r;
    while (res.polish_iterations < spec.polish_iterations && res.g1_sup > spec.g1_target) {
      ++res.polish_iterations;
      residual_jacobian(inst.student, inst.teacher, inst.inputs, targets, J, r);
      const Vec theta = flatten_params(inst.student);
      bool accepted = false;
      for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
        const Vec step = damped_gauss_newton_step(J, r, mu, 4 * J.cols);
        Network trial = inst.student;
        unflatten_params(trial, add(theta, step));
        if (!trial.biases)
          for (auto& L : trial.layers) std::fill(L.bias.begin(), L.bias.end(), 0.0);
        const double trial_loss = mean_loss(trial, inst.teacher, inst.inputs);
        if (std::isfinite(trial_loss) && trial_loss < loss) {
          inst.student = std::move(trial);
          loss = trial_loss;
          mu = std::max(mu / 3.0, 1e-12);
          accepted = true;
        } else {
          mu *= 4.0;
        }
      }
      if (!accepted) break;
      record(measure_g1_sup(inst.student, inst.teacher, inst.inputs));
    }
  }
  res.converged = res.g1_sup <= spec.g1_target;
  return res;
}

double boundary_offset(std::span<const double> w, const SubspaceBasis& basis) {
  const std::size_t d = basis.ambient_dim();
  const Vec a = kernel_coords(w, basis.U);
  double c = augmented_bias(w, d);
  if (!basis.offset.empty()) c += dot(w.first(d), basis.offset);
  const double na = norm2(a);
  if (na == 0.0) return c == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), c);
  return c / na;
}

double inscribed_radius(std::span<const double> w, const BallRegion& region) {
  const double delta = boundary_offset(w, *region.basis);
  if (!(std::abs(delta) < region.radius)) return 0.0;
  return std::sqrt(region.radius * region.radius - delta * delta);
}

namespace {

// Orthonormal basis (d' x (d'-1)) of the complement of a in subspace coordinates.
Matrix slice_frame(const Vec& a) {
  const std::size_t n = a.size();
  Matrix first(n, 1);
  const double na = norm2(a);
  for (std::size_t i = 0; i < n; ++i) first(i, 0) = a[i] / na;
  const Matrix full = complete_orthonormal(first, n);
  Matrix frame(n, n - 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 1; c < n; ++c) frame(i, c - 1) = full(i, c);
  return frame;
}

Vec unit_direction(std::size_t n, Rng& rng) {
  for (;;) {
    Vec g(n);
    for (double& v : g) v = rng.normal();
    const double ng = norm2(g);
    if (ng > 1e-12) return scaled(g, 1.0 / ng);
  }
}

Vec embed(const SubspaceBasis& basis, std::span<const double> y) {
  Vec x = matvec(basis.U, y);
  if (!basis.offset.empty()) axpy(1.0, basis.offset, x);
  return x;
}

double activation(std::span<const double> w, std::span<const double> x) {
  return dot(w.first(x.size()), x) + augmented_bias(w, x.size());
}

}  // namespace

ObservationResult check_observation(std::span<const double> w_j, std::span<const double> w_k,
                                    const BallRegion& region, std::size_t n_probe, Rng& rng) {
  const auto& basis = *region.basis;
  const std::size_t dp = basis.dim();
  ObservationResult res;
  const Vec a = kernel_coords(w_j, basis.U);
  const double na = norm2(a);
  const double delta = boundary_offset(w_j, basis);
  if (na == 0.0 || !(std::abs(delta) <= region.radius)) {
    res.empty_intersection = true;
    return res;
  }
  const Vec y0 = scaled(a, -delta / na);
  const double rho = std::sqrt(std::max(0.0, region.radius * region.radius - delta * delta));
  const Matrix frame = dp > 1 ? slice_frame(a) : Matrix(1, 0);
  const double scale_k = norm2(w_k.first(basis.ambient_dim())) + std::abs(augmented_bias(w_k, basis.ambient_dim()));
  for (std::size_t p = 0; p < std::max<std::size_t>(n_probe, 1); ++p) {
    Vec y = y0;
    if (p > 0 && frame.cols > 0) {
      const Vec u = unit_direction(frame.cols, rng);
      const double t = rho * std::pow(rng.uniform(), 1.0 / static_cast<double>(frame.cols));
      axpy(t, matvec(frame, u), y);
    }
    const Vec x = embed(basis, y);
    const double tol = 1e-12 * scale_k * (norm2(x) + 1.0);
    if (activation(w_k, x) >= -tol) {
      res.observed = true;
      return res;
    }
  }
  return res;
}

double inscribed_radius_sampled(std::span<const double> w, const BallRegion& region, std::size_t n_probe,
                                Rng& rng) {
  const auto& basis = *region.basis;
  const std::size_t dp = basis.dim();
  const Vec a = kernel_coords(w, basis.U);
  const double na = norm2(a);
  if (na == 0.0 || dp < 2) return 0.0;
  const double delta = boundary_offset(w, basis);
  if (!std::isfinite(delta)) return 0.0;
  const Vec y0 = scaled(a, -delta / na);
  const Matrix frame = slice_frame(a);
  const std::size_t m = frame.cols;
  const double half = region.radius + std::abs(delta);
  auto inside = [&](std::span<const double> z) {
    Vec y = y0;
    axpy(1.0, matvec(frame, z), y);
    return norm2(y) <= region.radius;
  };

  Vec centroid(m, 0.0);
  std::size_t kept = 0;
  Vec z(m);
  for (std::size_t p = 0; p < n_probe; ++p) {
    for (double& v : z) v = rng.uniform(-half, half);
    if (inside(z)) {
      axpy(1.0, z, centroid);
      ++kept;
    }
  }
  if (kept == 0) return 0.0;
  centroid = scaled(centroid, 1.0 / static_cast<double>(kept));

  double best = std::numeric_limits<double>::infinity();
  const std::size_t directions = std::max<std::size_t>(std::min<std::size_t>(n_probe / 10, 5000), 16);
  for (std::size_t q = 0; q < directions; ++q) {
    const Vec u = unit_direction(m, rng);
    double lo = 0.0, hi = 2.0 * half;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      Vec p = centroid;
      axpy(mid, u, p);
      (inside(p) ? lo : hi) = mid;
    }
    best = std::min(best, lo);
  }
  return best;
}

double projected_cos(std::span<const double> a, std::span<const double> b, const Matrix& U) {
  const Vec pa = kernel_coords(a, U), pb = kernel_coords(b, U);
  const double na = norm2(pa), nb = norm2(pb);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(pa, pb) / (na * nb), -1.0, 1.0);
}

// Rounding floor for sin between numerically identical directions.
constexpr double kSinRoundoff = 1e-12;

double projected_sin(std::span<const double> a, std::span<const double> b, const Matrix& U) {
  const Vec pa = kernel_coords(a, U), pb = kernel_coords(b, U);
  if (norm2(pa) == 0.0 || norm2(pb) == 0.0) return 1.0;
  const Vec ua = scaled(pa, 1.0 / norm2(pa)), ub = scaled(pb, 1.0 / norm2(pb));
  const double c = dot(ua, ub);
  if (c < 0.0) return 1.0;
  Vec r = ua;
  axpy(-c, ub, r);
  return std::min(1.0, norm2(r));
}

Theorem1Report verify_theorem1(const TheoryInstance& inst, double g1_sup, double cosine_threshold,
                               double drift_threshold, std::size_t n_probe) {
  const auto& basis = inst.data.basis;
  const BallRegion region{&basis, inst.spec.radius};
  const std::size_t d = inst.spec.ambient_dim;
  const bool full_rank = basis.dim() == d;
  Theorem1Report rep;
  rep.g1_sup = g1_sup;
  rep.conclusive = g1_sup <= inst.spec.g1_target;
  if (!rep.conclusive) rep.warnings.push_back("not converged: g1_sup above target");
  const Rng root(inst.spec.seed);
  const std::size_t ks = inst.student.layers[0].out_ch;
  bool any_observed = false;
  rep.specialization_pass = true;
  for (std::size_t j = 0; j < inst.teacher.layers[0].out_ch; ++j) {
    Theorem1Node node;
    node.teacher_node = j;
    const Vec wj = node_weight(inst.teacher, 0, j);
    Rng rng = root.derive(1000 + j);
    for (std::size_t k = 0; k < ks && !node.observed; ++k)
      node.observed = check_observation(wj, node_weight(inst.student, 0, k), region, n_probe, rng).observed;
    node.cosine = -2.0;
    for (std::size_t k = 0; k < ks; ++k) {
      const Vec wk = node_weight(inst.student, 0, k);
      const double c = projected_cos(wk, wj, basis.U);
      if (c > node.cosine) {
        node.cosine = c;
        node.best_student = k;
      }
    }
    const Vec wk = node_weight(inst.student, 0, node.best_student);
    const double nj = norm2(kernel_coords(wj, basis.U));
    node.lambda = nj > 0.0 ? std::copysign(norm2(kernel_coords(wk, basis.U)) / nj, node.cosine) : 0.0;
    node.augmented_cosine = full_rank ? cosine(wk, wj) : node.cosine;
    if (node.observed) {
      any_observed = true;
      if (!(node.cosine > cosine_threshold && node.lambda > 0.0)) rep.specialization_pass = false;
    } else {
      rep.warnings.push_back("teacher node " + std::to_string(j) + " is not observed by any student");
    }
    rep.nodes.push_back(node);
  }
  if (!any_observed) {
    rep.specialization_pass = false;
    rep.warnings.push_back("no observed teacher nodes");
  }

  rep.freezing_pass = true;
  for (std::size_t k = 0; k < ks; ++k) {
    const Vec now = project(basis, node_kernel(inst.student, 0, k)).out_component;
    const Vec init = project(basis, node_kernel(inst.student_init, 0, k)).out_component;
    const double base = norm2(init);
    const double drift = base > 0.0 ? norm2(sub(now, init)) / base : norm2(now);
    rep.out_of_plane_drift.push_back(drift);
    if (!(drift <= drift_threshold)) rep.freezing_pass = false;
  }
  return rep;
}

TheoryReport verify_theorem2(const Network& student, const Network& teacher, const BallRegion& region,
                             const std::vector<Vec>& inputs, double g1_sup, std::size_t n_probe,
                             std::uint64_t seed) {
  const auto& basis = *region.basis;
  const std::size_t d = basis.ambient_dim();
  const std::size_t dp = basis.dim();
  const std::size_t ks = student.layers[0].out_ch;
  const std::size_t kt = teacher.layers[0].out_ch;
  TheoryReport rep;
  rep.g1_sup = g1_sup;
  rep.K = ks + kt;
  for (const auto& x : inputs) rep.M0 = std::max(rep.M0, std::sqrt(dot(x, x) + 1.0));

  Matrix complement;
  if (dp < d) {
    const Matrix full = complete_orthonormal(basis.U, d);
    complement = Matrix(d, d - dp);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t c = dp; c < d; ++c) complement(i, c - dp) = full(i, c);
  }

  const Rng root(seed);
  double max_M = 0.0;
  std::size_t checked = 0;
  rep.constant_level_pass = true;
  for (std::size_t j = 0; j < kt; ++j) {
    Theorem2Node node;
    node.teacher_node = j;
    const Vec wj = node_weight(teacher, 0, j);
    const Vec vj = node_fanout(teacher, 0, j);
    Rng rng = root.derive(j);
    for (std::size_t k = 0; k < ks; ++k)
      if (check_observation(wj, node_weight(student, 0, k), region, n_probe, rng).observed) node.observed_by.push_back(k);
    for (std::size_t k = 0; k < ks; ++k) {
      const Vec wk = node_weight(student, 0, k);
      const double s = projected_sin(wk, wj, basis.U);
      if (s < node.best_in_plane_sin || k == 0) {
        node.best_in_plane_sin = s;
        node.best_student = k;
      }
      if (complement.cols > 0) node.best_out_plane_sin = std::min(node.best_out_plane_sin, projected_sin(wk, wj, complement));
    }
    if (node.observed_by.empty()) {
      rep.warnings.push_back("teacher node " + std::to_string(j) + " is not observed");
      rep.nodes.push_back(node);
      continue;
    }
    node.alpha = -std::numeric_limits<double>::infinity();
    for (std::size_t k : node.observed_by) {
      const double a = dot(vj, node_fanout(student, 0, k));
      if (a > node.alpha) {
        node.alpha = a;
        node.alpha_student = k;
      }
    }
    node.radius = inscribed_radius(wj, region);
    node.M = node.radius > 0.0 ? (10.0 / node.radius) * std::sqrt(static_cast<double>(dp) / (2.0 * std::numbers::pi))
                               : std::numeric_limits<double>::infinity();
    if (std::isfinite(node.M)) max_M = std::max(max_M, node.M);
    if (node.alpha > 0.0) {
      node.bound = node.M * static_cast<double>(rep.K) * g1_sup / node.alpha;
      node.satisfied = node.best_in_plane_sin <= node.bound + kSinRoundoff;
      ++checked;
      if (!node.satisfied) rep.constant_level_pass = false;
    } else {
      node.bound = std::numeric_limits<double>::infinity();
      node.satisfied = true;
      rep.warnings.push_back("teacher node " + std::to_string(j) + ": no observer with positive alpha");
    }
    rep.nodes.push_back(node);
  }
  if (checked == 0) {
    rep.constant_level_pass = false;
    rep.warnings.push_back("no observed teacher nodes with a usable bound");
  }
  rep.M2 = 2.0 * rep.M0 * max_M * static_cast<double>(rep.K) + 5.0;
  return rep;
}

TrendReport theorem2_trend(const TheoryInstance& inst, const ConvergenceResult& conv, double final_threshold,
                           double tolerance, double trend_start) {
  TrendReport rep;
  const Matrix& U = inst.data.basis.U;
  for (const auto& snap : conv.snapshots) {
    double worst = 0.0;
    for (std::size_t j = 0; j < inst.teacher.layers[0].out_ch; ++j) {
      const Vec wj = node_weight(inst.teacher, 0, j);
      double best = 1.0;
      for (std::size_t k = 0; k < snap.student.layers[0].out_ch; ++k)
        best = std::min(best, projected_sin(node_weight(snap.student, 0, k), wj, U));
      worst = std::max(worst, best);
    }
    rep.curve.emplace_back(snap.g1_sup, worst);
  }
  if (rep.curve.empty()) return rep;
  std::stable_sort(rep.curve.begin(), rep.curve.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  rep.final_max_sin = rep.curve.back().second;
  rep.pass = rep.final_max_sin <= final_threshold;
  double running = std::numeric_limits<double>::infinity();
  for (const auto& [eps, s] : rep.curve) {
    if (eps > trend_start) continue;
    if (s > running + tolerance) rep.pass = false;
    running = std::min(running, s);
  }
  return rep;
}

Corollary1Report verify_corollary1(const Network& student, const Network& teacher, const BallRegion& region,
                                   const std::vector<Vec>& inputs, double g1_sup, const CorollaryOptions& opts) {
  const auto& basis = *region.basis;
  const std::size_t dp = basis.dim();
  const std::size_t ks = student.layers[0].out_ch;
  const std::size_t kt = teacher.layers[0].out_ch;
  const std::size_t C = student.output_dim();
  const double K = static_cast<double>(ks + kt);
  const Rng root(opts.seed);
  Corollary1Report rep;

  std::vector<std::size_t> active(ks, 0);
  for (const auto& x : inputs) {
    const auto f = forward(student, x, true);
    for (std::size_t k = 0; k < ks; ++k) active[k] += f.gates[0][k];
  }
  std::vector<Vec> ws, wt;
  std::vector<bool> crosses(ks);
  Vec fraction(ks, 0.0);
  for (std::size_t k = 0; k < ks; ++k) {
    ws.push_back(node_weight(student, 0, k));
    fraction[k] = inputs.empty() ? 0.0 : static_cast<double>(active[k]) / static_cast<double>(inputs.size());
    crosses[k] = inscribed_radius(ws[k], region) > 0.0 && fraction[k] >= opts.min_side_fraction &&
                 fraction[k] <= 1.0 - opts.min_side_fraction;
  }
  for (std::size_t j = 0; j < kt; ++j) wt.push_back(node_weight(teacher, 0, j));

  Vec specialized_norms;
  for (std::size_t k = 0; k < ks; ++k) {
    CorollaryNode node;
    node.student_node = k;
    node.fanout_norm = norm2(node_fanout(student, 0, k));
    node.boundary_in_region = crosses[k];
    node.active_fraction = fraction[k];
    double best_teacher = 1.0;
    for (const auto& w : wt) best_teacher = std::min(best_teacher, projected_sin(ws[k], w, basis.U));
    node.specialized = best_teacher < opts.specialized_sin;
    node.c0 = best_teacher;
    for (std::size_t o = 0; o < ks; ++o)
      if (o != k && crosses[o]) node.c0 = std::min(node.c0, projected_sin(ws[k], ws[o], basis.U));
    if (node.specialized) specialized_norms.push_back(node.fanout_norm);

    if (node.boundary_in_region && node.c0 > opts.c0_floor) {
      Rng rng = root.derive(k);
      std::vector<std::size_t> observers;
      for (std::size_t o = 0; o < ks; ++o)
        if (o != k && check_observation(ws[k], ws[o], region, opts.n_probe, rng).observed) observers.push_back(o);
      if (observers.size() < C) {
        node.flag = "fewer than C observers";
      } else {
        const double r = inscribed_radius(ws[k], region);
        const double M = (10.0 / r) * std::sqrt(static_cast<double>(dp) / (2.0 * std::numbers::pi));
        std::vector<std::size_t> pick(C);
        std::vector<bool> mask(observers.size(), false);
        std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(C), true);
        double best = std::numeric_limits<double>::infinity();
        std::size_t combos = 0;
        do {
          Matrix Q(C, C);
          std::size_t col = 0;
          for (std::size_t i = 0; i < observers.size(); ++i) {
            if (!mask[i]) continue;
            const Vec v = node_fanout(student, 0, observers[i]);
            for (std::size_t c = 0; c < C; ++c) Q(c, col) = v[c];
            ++col;
          }
          try {
            best = std::min(best, matrix_norm1(inverse(Q)) * M * K * g1_sup / node.c0);
          } catch (const Error&) {
          }
        } while (++combos < 10000 && std::prev_permutation(mask.begin(), mask.end()));
        if (std::isfinite(best)) {
          node.bound = best;
          node.bound_satisfied = node.fanout_norm <= best;
        } else {
          node.flag = "singular Q";
        }
      }
    }
    rep.nodes.push_back(node);
  }

  if (!specialized_norms.empty()) {
    std::sort(specialized_norms.begin(), specialized_norms.end());
    const std::size_t n = specialized_norms.size();
    rep.median_specialized_fanout =
        n % 2 ? specialized_norms[n / 2] : 0.5 * (specialized_norms[n / 2 - 1] + specialized_norms[n / 2]);
  }
  rep.qualitative_pass = !specialized_norms.empty();
  rep.bound_pass = true;
  for (const auto& node : rep.nodes) {
    if (!(node.boundary_in_region && node.c0 > opts.c0_floor)) continue;
    ++rep.checked;
    if (!(node.fanout_norm < opts.fanout_ratio * rep.median_specialized_fanout)) rep.qualitative_pass = false;
    if (!node.bound_satisfied) rep.bound_pass = false;
  }
  return rep;
}

void write_theorem2_csv(const TheoryReport& rep, const std::string& path) {
  CsvWriter w(path, {"node", "sin_theta", "bound", "alpha", "radius", "satisfied"});
  for (const auto& n : rep.nodes) {
    w.field(n.teacher_node).field(n.best_in_plane_sin).field(n.bound).field(n.alpha).field(n.radius)
        .field(std::string(n.satisfied ? "1" : "0"));
    w.end_row();
  }
}

}  // namespace splab
