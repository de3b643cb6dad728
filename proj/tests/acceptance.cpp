// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "splab/attacks.hpp"
#include "splab/checkpoint.hpp"
#include "splab/config.hpp"
#include "splab/data.hpp"
#include "splab/experiments.hpp"
#include "splab/losses.hpp"
#include "splab/specialization.hpp"
#include "splab/theory.hpp"
#include "splab/training.hpp"

#ifndef SPLAB_CLI_PATH
#define SPLAB_CLI_PATH "splab"
#endif
#ifndef SPLAB_SOURCE_DIR
#define SPLAB_SOURCE_DIR "."
#endif

using namespace splab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Collects failed sub-checks so a criterion reports what broke.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string s = std::to_string(total_ - failed_) + "/" + std::to_string(total_) + " checks";
    for (const auto& f : failures_) s += "; " + f;
    return s;
  }

 private:
  std::size_t total_ = 0, failed_ = 0;
  std::vector<std::string> failures_;
};

Vec random_vec(std::size_t n, Rng& rng, double lo, double hi) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// ---------------------------------------------------------------------------

bool near_kink(const Network& net, std::span<const double> x, double margin) {
  const auto f = forward(net, x, true);
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    // Recompute pre-activations from the recorded inputs of each layer.
    Network head;
    head.input_shape = net.input_shape;
    head.biases = net.biases;
    head.layers.assign(net.layers.begin(), net.layers.begin() + static_cast<std::ptrdiff_t>(l + 1));
    // With the last layer linear, `head` emits layer l's pre-activations.
    for (double z : logits(head, x))
      if (std::abs(z) < margin) return true;
  }
  (void)f;
  return false;
}

Outcome criterion1() {
  Timer timer;
  Rng rng(2024);
  double worst = 0.0;
  std::size_t triples = 0, params = 0;
  for (std::size_t t = 0; t < 20; ++t) {
    Network net;
    const std::size_t arch = t % 3;
    if (arch == 0) net = make_dense_net(6, {8}, 3, true, rng);
    if (arch == 1) net = make_dense_net(5, {7, 6}, 4, true, rng);
    if (arch == 2) net = make_conv_net(2, 6, 6, {3, 4}, 3, true, rng);
    Vec x;
    do {
      x = random_vec(net.input_size(), rng, -1.0, 1.0);
    } while (near_kink(net, x, 1e-3));
    const std::size_t C = net.output_dim();
    const Vec target = random_vec(C, rng, -1.0, 1.0);
    const std::size_t label = rng.below(C);
    const Vec probs = softmax(random_vec(C, rng, -1.0, 1.0));
    std::function<LossValue(std::span<const double>)> loss;
    switch (t % 3 == 0 ? (t / 3) % 3 : t % 3) {
      case 0: loss = [&](std::span<const double> z) { return l2_logit_loss(z, target); }; break;
      case 1: loss = [&](std::span<const double> z) { return cross_entropy(z, label); }; break;
      default: loss = [&](std::span<const double> z) { return soft_cross_entropy(z, probs); }; break;
    }
    const auto f = forward(net, x, true);
    const auto b = backward(net, f, loss(f.logits).grad);
    Vec analytic = b.params.flatten();
    analytic.insert(analytic.end(), b.input_grad.begin(), b.input_grad.end());

    Network probe = net;
    const Vec theta = flatten_params(net);
    Vec numeric = finite_diff_grad(
        [&](std::span<const double> p) {
          unflatten_params(probe, p);
          return loss(logits(probe, x)).value;
        },
        theta, 1e-5);
    const Vec gx = finite_diff_grad([&](std::span<const double> xi) { return loss(logits(net, xi)).value; }, x, 1e-5);
    numeric.insert(numeric.end(), gx.begin(), gx.end());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-4});
      worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    params += analytic.size();
    ++triples;
  }
  const double secs = timer.seconds();
  return {worst < 1e-6 && secs < 60.0, std::to_string(triples) + " triples, " + std::to_string(params) +
                                            " gradient entries, max relative error " + fmt(worst) + ", " +
                                            fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------

struct TheoryRuns {
  TheoryVariantResult full, low;
  double full_secs = 0.0, low_secs = 0.0;
};

TheoryRuns run_theory() {
  TheoryRuns r;
  const ExperimentConfig defaults = parse_config("{}");
  Timer t1;
  r.full = run_theory_variant("fullrank", defaults.theory.fullrank);
  r.full_secs = t1.seconds();
  Timer t2;
  r.low = run_theory_variant("lowrank", defaults.theory.lowrank);
  r.low_secs = t2.seconds();
  return r;
}

double min_cosine(const Theorem1Report& rep, bool augmented) {
  double m = 1.0;
  for (const auto& n : rep.nodes)
    if (n.observed) m = std::min(m, augmented ? n.augmented_cosine : n.cosine);
  return m;
}

std::size_t observed_count(const Theorem1Report& rep) {
  std::size_t c = 0;
  for (const auto& n : rep.nodes) c += n.observed ? 1 : 0;
  return c;
}

Outcome criterion2(const TheoryRuns& r) {
  const auto& t = r.full.theorem1;
  const bool ok = t.conclusive && t.specialization_pass && r.full_secs < 600.0;
  return {ok, "g1_sup " + fmt(r.full.convergence.g1_sup) + " after " + std::to_string(r.full.convergence.epochs) +
                  " epochs + " + std::to_string(r.full.convergence.polish_iterations) + " polish steps, " +
                  std::to_string(observed_count(t)) + " observed teacher nodes, min cosine " +
                  fmt(min_cosine(t, false)) + ", " + fmt(r.full_secs) + " s"};
}

Outcome criterion3(const TheoryRuns& r) {
  const auto& t = r.low.theorem1;
  double drift = 0.0;
  for (double d : t.out_of_plane_drift) drift = std::max(drift, d);
  const bool ok = t.conclusive && t.specialization_pass && t.freezing_pass && r.low_secs < 600.0;
  return {ok, "g1_sup " + fmt(r.low.convergence.g1_sup) + ", " + std::to_string(observed_count(t)) +
                  " observed teacher nodes, min in-plane cosine " + fmt(min_cosine(t, false)) +
                  ", max out-of-plane drift " + fmt(drift) + ", " + fmt(r.low_secs) + " s"};
}

Outcome criterion4(const TheoryRuns& r) {
  auto describe = [](const std::string& name, const TheoryVariantResult& v) {
    double worst_ratio = 0.0;
    for (const auto& n : v.theorem2.nodes)
      if (n.bound > 0.0) worst_ratio = std::max(worst_ratio, n.best_in_plane_sin / n.bound);
    return name + ": trend " + (v.trend.pass ? "PASS" : "FAIL") + " (final max sin " + fmt(v.trend.final_max_sin) +
           "), constant " + (v.theorem2.constant_level_pass ? "PASS" : "FAIL") + " (max sin/bound " +
           fmt(worst_ratio) + ")";
  };
  const bool ok = r.full.theorem1.conclusive && r.low.theorem1.conclusive && r.full.trend.pass && r.low.trend.pass;
  return {ok, describe("full-rank", r.full) + "; " + describe("low-rank", r.low)};
}

Outcome criterion5(const TheoryRuns& r) {
  auto describe = [](const std::string& name, const TheoryVariantResult& v) {
    double worst = 0.0;
    for (const auto& n : v.corollary1.nodes)
      if (n.boundary_in_region && n.c0 > 0.3) worst = std::max(worst, n.fanout_norm);
    return name + " (student width " + std::to_string(v.theorem2.K - v.theorem1.nodes.size()) + "): " +
           std::to_string(v.corollary1.checked) + " nodes with c0 > 0.3, largest fan-out " + fmt(worst) +
           " vs median specialized " + fmt(v.corollary1.median_specialized_fanout);
  };
  const bool ok = r.full.corollary1.qualitative_pass && r.low.corollary1.qualitative_pass &&
                  r.full.theorem1.conclusive && r.low.theorem1.conclusive;
  return {ok, describe("full-rank", r.full) + "; " + describe("low-rank", r.low)};
}

// ---------------------------------------------------------------------------

Outcome criterion6() {
  Timer timer;
  Rng rng(66);
  Checks c;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng.below(60);
    const Vec a = random_vec(n, rng, -3.0, 3.0), b = random_vec(n, rng, -3.0, 3.0);
    const double r = nc(a, b);
    c.expect(r >= -1.0 && r <= 1.0, "nc out of range");
    Vec af = a;
    const double scale = std::exp(rng.uniform(-5.0, 5.0)), shift = rng.uniform(-100.0, 100.0);
    for (double& v : af) v = scale * v + shift;
    c.expect(std::abs(nc(af, b) - r) < 1e-12, "nc not affine invariant");
    c.expect(std::abs(nc(a, a) - 1.0) < 1e-12, "nc(a, a) != 1");
  }
  for (int t = 0; t < 500; ++t) {
    const std::size_t d = 2 + rng.below(30), dp = 1 + rng.below(d);
    Matrix m(d, dp);
    for (double& v : m.data) v = rng.normal();
    SubspaceBasis basis;
    basis.U = orthonormalize_columns(m);
    const Vec wk = random_vec(d, rng, -1.0, 1.0), wj = random_vec(d, rng, -1.0, 1.0);
    const Vec dw = normalized_delta(wk, wj);
    const auto p = project(basis, dw);
    const double lhs = dot(p.in_component, p.in_component) + dot(p.out_component, p.out_component);
    c.expect(std::abs(lhs - dot(dw, dw)) < 1e-12, "eps_in^2 + eps_out^2 != |dw|^2");
  }
  for (int t = 0; t < 50; ++t) {
    const Network te = make_dense_net(6, {5, 4}, 3, true, rng);
    const Network s = make_dense_net(6, {7, 5}, 3, true, rng);
    std::vector<Vec> xs;
    for (int i = 0; i < 40; ++i) xs.push_back(random_vec(6, rng, -1.0, 1.0));
    SubspaceBasis basis;
    basis.U = Matrix::identity(6);
    const auto rep = specialization_report(s, te, xs, &basis);
    for (const auto& l : rep.nc.layers)
      for (std::size_t i = 1; i < l.sorted_bnc.size(); ++i)
        c.expect(l.sorted_bnc[i - 1] >= l.sorted_bnc[i], "sorted BNC not descending");
    for (std::size_t i = 1; i < rep.eps->sorted_in.size(); ++i) {
      c.expect(rep.eps->sorted_in[i - 1] <= rep.eps->sorted_in[i], "sorted eps_in not ascending");
      c.expect(rep.eps->sorted_out[i - 1] <= rep.eps->sorted_out[i], "sorted eps_out not ascending");
    }
  }
  const double eps = 8.0 / 255.0;
  c.expect(ccat_lambda(0.0, eps, 10.0) == 1.0, "lambda(0) != 1");
  c.expect(ccat_lambda(eps, eps, 10.0) == 0.0, "lambda(eps) != 0");
  c.expect(std::abs(ccat_lambda(eps / 2.0, eps, 10.0) - 1.0 / 1024.0) < 1e-15, "lambda(eps/2; rho=10) != 1/1024");
  const double secs = timer.seconds();
  c.expect(secs < 60.0, "runtime over 1 minute");
  return {c.ok(), c.summary() + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------

Network linear_net(const Vec& w) {
  Rng rng(0);
  Network net = make_dense_net(w.size(), {}, 1, true, rng);
  net.layers[0].weight = w;
  net.layers[0].bias = {0.0};
  return net;
}

Outcome criterion7() {
  Timer timer;
  Rng rng(77);
  Checks c;
  double worst_violation = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Rng net_rng = rng.derive(static_cast<std::uint64_t>(t));
    const Network s = make_dense_net(8, {6}, 3, true, net_rng);
    const Network te = make_dense_net(8, {5}, 3, true, net_rng);
    Vec x(8);
    for (double& v : x) v = rng.uniform() < 0.25 ? std::round(rng.uniform()) : rng.uniform();
    AttackSpec spec;
    spec.norm = static_cast<Norm>(t % 3);
    spec.epsilon = rng.uniform(0.0, spec.norm == Norm::l1 ? 4.0 : (spec.norm == Norm::l2 ? 1.5 : 0.5));
    spec.step_size = rng.uniform(0.01, 1.0);
    spec.iterations = 1 + rng.below(8);
    spec.mode = rng.below(2) ? AttackMode::oracle : AttackMode::data;
    spec.loss = static_cast<AttackLoss>(rng.below(4));
    spec.random_init = rng.below(2) == 1;
    const auto r = pgd(s, &te, x, rng.below(3), spec, rng);
    const double excess = perturbation_norm(sub(r.x_adv, x), spec.norm) - spec.epsilon;
    worst_violation = std::max(worst_violation, excess);
    c.expect(excess <= 1e-9, "ball violated");
    for (double v : r.x_adv) c.expect(v >= 0.0 && v <= 1.0, "left [0,1]");
  }
  for (int t = 0; t < 50; ++t) {
    Vec w(10);
    for (double& v : w) v = rng.normal();
    const Network f = linear_net(w);
    Network zero = linear_net(Vec(10, 0.0));
    const Vec x = random_vec(10, rng, 0.2, 0.8);
    const double eps = 0.1;
    const double sgn = dot(w, x) >= 0.0 ? 1.0 : -1.0;
    Vec expect = x;
    for (std::size_t i = 0; i < 10; ++i) expect[i] += eps * sgn * (w[i] > 0 ? 1.0 : -1.0);
    AttackSpec spec;
    spec.epsilon = eps;
    spec.step_size = 0.025;
    spec.iterations = 8;
    spec.random_init = false;
    const Vec a = pgd(f, &zero, x, std::nullopt, spec, rng).x_adv;
    const Vec b = fgsm(f, &zero, x, std::nullopt, eps, AttackMode::oracle).x_adv;
    for (std::size_t i = 0; i < 10; ++i) {
      c.expect(std::abs(a[i] - expect[i]) < 1e-12, "pgd differs from the linear closed form");
      c.expect(std::abs(b[i] - expect[i]) < 1e-12, "fgsm differs from the linear closed form");
    }
  }
  {
    const Network s = make_dense_net(5, {6}, 2, true, rng);
    const Network te = make_dense_net(5, {6}, 2, true, rng);
    for (int t = 0; t < 30; ++t) {
      const Vec x = random_vec(5, rng, 0.0, 1.0);
      AttackSpec spec;
      spec.epsilon = 0.0;
      spec.norm = static_cast<Norm>(t % 3);
      c.expect(pgd(s, &te, x, std::nullopt, spec, rng).x_adv == x, "eps=0 pgd is not the identity");
      c.expect(fgsm(s, &te, x, std::nullopt, 0.0, AttackMode::oracle).x_adv == x, "eps=0 fgsm is not the identity");
    }
  }
  {
    const Network te = make_conv_net(1, 6, 6, {3}, 3, true, rng);
    const Network s0 = make_conv_net(1, 6, 6, {4}, 3, true, rng);
    std::vector<Vec> data;
    for (int i = 0; i < 24; ++i) data.push_back(random_vec(36, rng, 0.0, 1.0));
    for (auto [st_r, at_r] : {std::pair{Regime::st_logit, Regime::at_teacher_target},
                              std::pair{Regime::st_label, Regime::at_label_target}}) {
      TrainConfig st;
      st.regime = st_r;
      st.epochs = 3;
      st.batch_size = 5;
      st.learning_rate = 0.05;
      st.seed = 5;
      st.augmentations = {AugmentKind::horizontal_flip};
      TrainConfig at = st;
      at.regime = at_r;
      at.attack.epsilon = 0.0;
      c.expect(flatten_params(train(st, te, s0, data).student) == flatten_params(train(at, te, s0, data).student),
               "AT(eps=0) differs from ST");
    }
  }
  const double secs = timer.seconds();
  c.expect(secs < 120.0, "runtime over 2 minutes");
  return {c.ok(), c.summary() + ", max ball excess " + fmt(worst_violation) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------

std::optional<fs::path> cifar_dir() {
  const char* env = std::getenv("SPLAB_CIFAR_DIR");
  if (!env || !*env) return std::nullopt;
  if (!cifar10_available(env)) return std::nullopt;
  return fs::path(env);
}

struct DeskRun {
  bool ran = false;
  std::string reason;
  DeskScaleResult result;
  double secs = 0.0;
};

DeskRun run_desk() {
  DeskRun d;
  const auto dir = cifar_dir();
  if (!dir) {
    d.reason = "not run: CIFAR-10 binaries not found (set SPLAB_CIFAR_DIR to the cifar-10-batches-bin directory)";
    return d;
  }
  Timer timer;
  const Cifar10 cifar = load_cifar10(*dir);
  DeskScaleOptions opts;
  opts.seed = 1;
  opts.log = [&](const std::string& s) { std::cerr << "[desk " << fmt(timer.seconds()) << " s] " << s << '\n'; };
  d.result = run_desk_scale(cifar.train, cifar.test, opts);
  d.secs = timer.seconds();
  d.ran = true;
  return d;
}

Outcome criterion8(const DeskRun& d) {
  if (!d.ran) return {false, d.reason};
  const auto& r = d.result;
  auto flag = [](bool b) { return b ? "PASS" : "FAIL"; };
  std::string s = "(a) " + std::string(flag(r.a_robust_order)) + " AT " + fmt(r.final_robust.at("at_teacher_target")) +
                  " ST-logit " + fmt(r.final_robust.at("st_logit")) + " ST-label " +
                  fmt(r.final_robust.at("st_label")) + "; (b) " + flag(r.b_mbnc) + "; (c) " + flag(r.c_pearson) +
                  " pearson " + fmt(r.pearson_nc_epsin) + "; (d) " + flag(r.d_monotone) + "; (e) " + flag(r.e_ccat) +
                  "; " + fmt(d.secs / 3600.0) + " h";
  const bool ok = r.a_robust_order && r.b_mbnc && r.c_pearson && r.d_monotone && r.e_ccat && d.secs < 4 * 3600.0;
  return {ok, s};
}

class LinearFeatures : public FeatureMap {
 public:
  explicit LinearFeatures(Matrix a) : a_(std::move(a)) {}
  Vec eval(std::span<const double> x) const override { return matvec(a_, x); }
  Vec vjp(std::span<const double>, std::span<const double> g) const override { return matvec_t(a_, g); }

 private:
  Matrix a_;
};

Outcome criterion9(const DeskRun& d) {
  Rng rng(99);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t m = 2 + t % 4, n = m + 2 + t % 3;
    Matrix a(m, n);
    for (double& v : a.data) v = rng.normal() / std::sqrt(static_cast<double>(n));
    const LinearFeatures f(a);
    const Vec x = random_vec(n, rng, 0.0, 1.0), x0 = random_vec(n, rng, 0.0, 1.0);
    const Vec y = solve(matmul(a, a.transposed()), matvec(a, sub(x, x0)));
    const Vec expect = add(x0, matvec_t(a, y));
    RobustFeatureOptions o;
    o.alpha = 0.0;
    o.steps = 50000;
    o.step_size = 0.05;
    o.clip_lo = -std::numeric_limits<double>::infinity();
    o.clip_hi = std::numeric_limits<double>::infinity();
    const auto r = gen_robust_feature(x, f, nullptr, o, rng, x0);
    worst = std::max(worst, norm_inf(sub(r.x_r, expect)));
  }
  const bool oracle = worst < 1e-6;
  std::string s = "least-squares oracle " + std::string(oracle ? "PASS" : "FAIL") + " (max error " + fmt(worst) + ")";
  if (!d.ran) return {false, s + "; desk-scale RFT " + d.reason};
  s += "; desk-scale RFT robust " + fmt(d.result.rft_robust) + " vs ST baseline " + fmt(d.result.rft_baseline_robust);
  return {oracle && d.result.rft_better, s};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + SPLAB_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion10() {
  Checks c;
  const fs::path root = fs::temp_directory_path() / "splab_acceptance_10";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string config = std::string(SPLAB_SOURCE_DIR) + "/configs/minimal_synthetic.json";
  std::size_t compared = 0;
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    for (const char* cmd : {"train", "evaluate", "specialize"})
      c.expect(run_cli(std::string(cmd) + " --config " + config + " --seed 3 --out " + out) == 0,
               std::string(cmd) + " exited non-zero");
  }
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    if (entry.path().extension() != ".csv" && entry.path().extension() != ".splb") continue;
    c.expect(fs::exists(root / "b" / name) && slurp(entry.path()) == slurp(root / "b" / name),
             name.string() + " differs between runs");
    ++compared;
  }
  c.expect(compared >= 10, "too few artifacts compared");

  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    Checkpoint ck{t % 2 ? make_conv_net(3, 7, 7, {4, 5}, 10, true, rng) : make_dense_net(9, {8, 3}, 2, t > 2, rng),
                  {static_cast<std::uint32_t>(t), "st_logit", static_cast<std::uint64_t>(t)}};
    const fs::path p = root / "ck.splb";
    save_checkpoint(ck, p);
    const Checkpoint back = load_checkpoint(p);
    const Vec a = flatten_params(ck.net), b = flatten_params(back.net);
    c.expect(a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0,
             "checkpoint round trip not bitwise");
  }

  auto cifar_kind = [&](const std::function<void()>& fn) -> std::optional<CifarError::Kind> {
    try {
      fn();
    } catch (const CifarError& e) {
      return e.kind();
    }
    return std::nullopt;
  };
  const fs::path cdir = root / "cifar";
  fs::create_directories(cdir);
  c.expect(cifar_kind([&] { load_cifar10(cdir); }) == CifarError::Kind::missing_file, "missing file not reported");
  {
    std::ofstream(cdir / "data_batch_1.bin", std::ios::binary) << std::string(kCifarRecordBytes * 3, '\0');
  }
  c.expect(cifar_kind([&] { read_cifar_batch(cdir / "data_batch_1.bin", kCifarRecordsPerBatch); }) ==
               CifarError::Kind::bad_size,
           "short batch not reported as a size error");
  {
    std::ofstream(cdir / "odd.bin", std::ios::binary) << std::string(kCifarRecordBytes + 5, '\0');
  }
  c.expect(cifar_kind([&] { read_cifar_batch(cdir / "odd.bin"); }) == CifarError::Kind::bad_size,
           "ragged file not reported as a size error");
  return {c.ok(), c.summary() + ", " + std::to_string(compared) + " artifacts byte-identical across runs"};
}

}  // namespace

int main() {
  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int n, const Outcome& o) {
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    results.emplace_back(n, o);
  };
  auto guarded = [&](int n, const std::function<Outcome()>& fn) {
    try {
      report(n, fn());
    } catch (const std::exception& e) {
      report(n, {false, std::string("error: ") + e.what()});
    }
  };

  guarded(1, criterion1);
  TheoryRuns theory;
  bool theory_ok = true;
  std::string theory_error;
  try {
    theory = run_theory();
  } catch (const std::exception& e) {
    theory_ok = false;
    theory_error = e.what();
  }
  for (int n : {2, 3, 4, 5}) {
    if (!theory_ok) {
      report(n, {false, "error: " + theory_error});
      continue;
    }
    if (n == 2) report(n, criterion2(theory));
    if (n == 3) report(n, criterion3(theory));
    if (n == 4) report(n, criterion4(theory));
    if (n == 5) report(n, criterion5(theory));
  }
  guarded(6, criterion6);
  guarded(7, criterion7);
  DeskRun desk;
  try {
    desk = run_desk();
  } catch (const std::exception& e) {
    desk.reason = std::string("error: ") + e.what();
  }
  report(8, criterion8(desk));
  guarded(9, [&] { return criterion9(desk); });
  guarded(10, criterion10);

  std::size_t passed = 0;
  for (const auto& [n, o] : results) passed += o.pass ? 1 : 0;
  std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
  return passed == results.size() ? 0 : 1;
}
