#include <doctest.h>

#include <cmath>
#include <limits>

#include "splab/losses.hpp"
#include "splab/specialization.hpp"
#include "splab/theory.hpp"
#include "splab/training.hpp"

using namespace splab;

namespace {

class LinearFeatures : public FeatureMap {
 public:
  explicit LinearFeatures(Matrix a) : a_(std::move(a)) {}
  Vec eval(std::span<const double> x) const override { return matvec(a_, x); }
  Vec vjp(std::span<const double>, std::span<const double> g) const override { return matvec_t(a_, g); }

 private:
  Matrix a_;
};

std::vector<Vec> random_inputs(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<Vec> out(n, Vec(d));
  for (auto& x : out)
    for (double& v : x) v = rng.uniform(0.2, 0.8);
  return out;
}

TrainConfig small_config(Regime r) {
  TrainConfig c;
  c.regime = r;
  c.epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.seed = 17;
  c.attack.epsilon = 0.05;
  c.attack.iterations = 3;
  return c;
}

}  // namespace

TEST_CASE("st step on a copy of the teacher does nothing") {
  Rng rng(1);
  const Network te = make_dense_net(4, {5}, 2, true, rng);
  Network s = te;
  const auto batch = random_inputs(10, 4, rng);
  const auto r = st_step(s, te, batch, small_config(Regime::st_logit), 0.1);
  CHECK(r.loss == 0.0);
  CHECK(flatten_params(s) == flatten_params(te));
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Rng rng(2);
  const Network te = make_dense_net(4, {5}, 2, true, rng);
  Network s = make_dense_net(4, {5}, 2, true, rng);
  const Vec before = flatten_params(s);
  st_step(s, te, random_inputs(10, 4, rng), small_config(Regime::st_logit), 0.0);
  CHECK(flatten_params(s) == before);

  TrainConfig c = small_config(Regime::st_logit);
  c.epochs = 1;
  c.learning_rate = 0.0;
  const auto res = train(c, te, s, random_inputs(20, 4, rng));
  CHECK(flatten_params(res.student) == before);
}

TEST_CASE("scalar linear st_logit follows the closed-form recursion") {
  Rng rng(3);
  Network s = make_dense_net(1, {}, 1, false, rng);
  Network te = make_dense_net(1, {}, 1, false, rng);
  s.layers[0].weight = {0.2};
  te.layers[0].weight = {1.5};
  const std::vector<Vec> xs = {{0.5}, {-1.0}, {2.0}};
  double m2 = 0.0;
  for (const auto& x : xs) m2 += x[0] * x[0] / 3.0;
  const double lr = 0.1;
  double a = 0.2;
  for (int t = 0; t < 50; ++t) {
    st_step(s, te, xs, small_config(Regime::st_logit), lr);
    a -= lr * (a - 1.5) * m2;
    CHECK(std::abs(s.layers[0].weight[0] - a) < 1e-10);
  }
  CHECK(std::abs(a - (1.5 + (0.2 - 1.5) * std::pow(1.0 - lr * m2, 50))) < 1e-10);
}

TEST_CASE("st_label uses the teacher argmax") {
  Rng rng(4);
  const Network te = make_dense_net(3, {4}, 3, true, rng);
  Network s = make_dense_net(3, {4}, 3, true, rng);
  const auto batch = random_inputs(6, 3, rng);
  double expect = 0.0;
  for (const auto& x : batch) {
    const Vec z = logits(s, x);
    const Vec p = softmax(z);
    expect -= std::log(p[argmax(logits(te, x))]) / 6.0;
  }
  CHECK(st_step(s, te, batch, small_config(Regime::st_label), 0.0).loss == doctest::Approx(expect));
}

TEST_CASE("adversarial training with zero budget equals standard training") {
  Rng rng(5);
  const Network te = make_dense_net(5, {6}, 3, true, rng);
  const Network s0 = make_dense_net(5, {7}, 3, true, rng);
  const auto data = random_inputs(30, 5, rng);
  TrainConfig st = small_config(Regime::st_logit);
  TrainConfig at = small_config(Regime::at_teacher_target);
  at.attack.epsilon = 0.0;
  CHECK(flatten_params(train(st, te, s0, data).student) == flatten_params(train(at, te, s0, data).student));
  TrainConfig stl = small_config(Regime::st_label);
  TrainConfig atl = small_config(Regime::at_label_target);
  atl.attack.epsilon = 0.0;
  CHECK(flatten_params(train(stl, te, s0, data).student) == flatten_params(train(atl, te, s0, data).student));
}

TEST_CASE("adversarial training against an identical teacher has zero loss") {
  Rng rng(6);
  const Network te = make_dense_net(4, {5}, 2, true, rng);
  Network s = te;
  const auto r = at_step(s, te, random_inputs(8, 4, rng), small_config(Regime::at_teacher_target), 0.1, Rng(3));
  CHECK(r.loss == 0.0);
}

TEST_CASE("ccat lambda and soft labels") {
  CHECK(ccat_lambda(0.0, 0.1, 10.0) == 1.0);
  CHECK(ccat_lambda(0.1, 0.1, 10.0) == 0.0);
  CHECK(ccat_lambda(0.05, 0.1, 10.0) == doctest::Approx(1.0 / 1024.0).epsilon(1e-12));
  CHECK(ccat_lambda(0.0, 0.0, 10.0) == 1.0);
  CHECK(ccat_soft_label(1.0, 2, 4) == Vec{0.0, 0.0, 1.0, 0.0});
  CHECK(ccat_soft_label(0.0, 2, 4) == Vec{0.25, 0.25, 0.25, 0.25});
  const Vec mid = ccat_soft_label(0.5, 0, 2);
  CHECK(mid[0] == doctest::Approx(0.75));
}

TEST_CASE("ccat step returns one soft label per sample") {
  Rng rng(7);
  const Network te = make_dense_net(4, {5}, 3, true, rng);
  Network s = make_dense_net(4, {5}, 3, true, rng);
  const auto r = ccat_step(s, te, random_inputs(5, 4, rng), small_config(Regime::ccat), 0.1, Rng(1));
  REQUIRE(r.soft_labels.size() == 5);
  for (const auto& y : r.soft_labels) {
    double sum = 0.0;
    for (double v : y) sum += v;
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("robust feature synthesis") {
  Rng rng(8);
  SUBCASE("starting at the target is a fixed point") {
    Matrix a(3, 5);
    for (double& v : a.data) v = rng.normal();
    const LinearFeatures f(a);
    const Vec x = random_inputs(1, 5, rng)[0];
    RobustFeatureOptions o;
    o.alpha = 0.0;
    const auto r = gen_robust_feature(x, f, nullptr, o, rng, x);
    CHECK(r.x_r == x);
    CHECK(r.objective == 0.0);
  }
  SUBCASE("alpha zero is pure feature matching") {
    Matrix a(3, 5);
    for (double& v : a.data) v = rng.normal();
    const LinearFeatures f(a);
    const Vec x = random_inputs(1, 5, rng)[0], xr = random_inputs(1, 5, rng)[0];
    const Vec d = sub(f.eval(x), f.eval(xr));
    CHECK(robust_feature_objective(xr, x, f, nullptr, 0.0) == dot(d, d));
  }
  SUBCASE("linear representation converges to the least-squares solution") {
    Matrix a(3, 6);
    for (double& v : a.data) v = rng.normal();
    const LinearFeatures f(a);
    const Vec x = random_inputs(1, 6, rng)[0], x0 = random_inputs(1, 6, rng)[0];
    // Minimum-norm correction: x0 + Aᵀ(AAᵀ)⁻¹A(x − x0).
    const Vec y = solve(matmul(a, a.transposed()), matvec(a, sub(x, x0)));
    const Vec expect = add(x0, matvec_t(a, y));
    RobustFeatureOptions o;
    o.alpha = 0.0;
    o.steps = 20000;
    o.step_size = 0.01;
    o.clip_lo = -std::numeric_limits<double>::infinity();
    o.clip_hi = std::numeric_limits<double>::infinity();
    const auto r = gen_robust_feature(x, f, nullptr, o, rng, x0);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(r.x_r[i] - expect[i]) < 1e-6);
  }
  SUBCASE("a divergent step size is reported") {
    Matrix a(3, 3);
    for (double& v : a.data) v = rng.normal();
    const LinearFeatures f(a);
    RobustFeatureOptions o;
    o.alpha = 0.0;
    o.step_size = 100.0;
    o.clip_lo = -std::numeric_limits<double>::infinity();
    o.clip_hi = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(gen_robust_feature(Vec{0.5, 0.5, 0.5}, f, nullptr, o, rng, Vec{0.1, 0.9, 0.3}), TrainingError);
  }
}

TEST_CASE("training is deterministic") {
  Rng rng(9);
  const Network te = make_conv_net(1, 6, 6, {3}, 2, true, rng);
  const Network s0 = make_conv_net(1, 6, 6, {4}, 2, true, rng);
  const auto data = random_inputs(20, 36, rng);
  for (Regime r : {Regime::st_logit, Regime::at_teacher_target, Regime::ccat}) {
    TrainConfig c = small_config(r);
    c.augmentations = {AugmentKind::horizontal_flip, AugmentKind::gaussian};
    CHECK(flatten_params(train(c, te, s0, data).student) == flatten_params(train(c, te, s0, data).student));
  }
}

TEST_CASE("learning rate schedule and validation") {
  TrainConfig c;
  c.epochs = 100;
  c.learning_rate = 1.0;
  c.schedule = LrSchedule::step;
  CHECK(c.lr_at(0) == 1.0);
  CHECK(c.lr_at(50) == doctest::Approx(0.1));
  CHECK(c.lr_at(80) == doctest::Approx(0.01));
  c.epochs = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("non-finite loss stops training with diagnostics") {
  Rng rng(10);
  const Network te = make_dense_net(3, {4}, 2, true, rng);
  Network s = make_dense_net(3, {4}, 2, true, rng);
  s.layers[1].weight[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(st_step(s, te, {Vec{1.0, 1.0, 1.0}}, small_config(Regime::st_logit), 0.1), TrainingError);
}

TEST_CASE("st_logit on a synthetic teacher covers every teacher node") {
  TheorySpec spec;
  spec.teacher_hidden = 4;
  spec.student_hidden = 8;
  spec.samples = 1024;
  spec.seed = 5;  // converging instance; other seeds can stall with a teacher node uncovered
  TheoryInstance inst = make_theory_instance(spec);
  TrainConfig c;
  c.epochs = 6000;
  c.batch_size = 1024;
  c.learning_rate = 0.3;
  c.seed = 1;
  const auto res = train(c, inst.teacher, inst.student, inst.inputs);
  CHECK(res.history.back().loss < 1e-4);
  const auto rep = nc_report(res.student, inst.teacher, inst.inputs);
  const Matrix& m = rep.layers[0].nc;  // student x teacher
  for (std::size_t j = 0; j < m.cols; ++j) {
    double best = -1.0;
    for (std::size_t k = 0; k < m.rows; ++k) best = std::max(best, m(k, j));
    CHECK(best > 0.99);
  }
}
