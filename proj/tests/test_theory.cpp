#include <doctest.h>

#include <cmath>

#include "splab/theory.hpp"

using namespace splab;

namespace {

SubspaceBasis identity_basis(std::size_t d) {
  SubspaceBasis b;
  b.U = Matrix::identity(d);
  b.offset.assign(d, 0.0);
  return b;
}

Network one_node_net(const Vec& w, double bias, double v) {
  Rng rng(0);
  Network net = make_dense_net(w.size(), {1}, 1, true, rng);
  net.layers[0].weight = w;
  net.layers[0].bias = {bias};
  net.layers[1].weight = {v};
  net.layers[1].bias = {0.0};
  return net;
}

}  // namespace

TEST_CASE("g1 of a copy is zero and matches the hand formula") {
  Rng rng(1);
  const Network te = make_dense_net(4, {3}, 2, true, rng);
  std::vector<Vec> xs(20, Vec(4));
  for (auto& x : xs)
    for (double& v : x) v = rng.normal();
  CHECK(measure_g1_sup(te, te, xs) == 0.0);

  const Vec x = {0.7, -0.2};
  const Network s = one_node_net({1.0, 0.5}, 0.1, 2.0);
  const Network t = one_node_net({0.3, -1.0}, 0.2, -1.5);
  const double f = std::max(0.0, 0.7 + 0.5 * -0.2 + 0.1);
  const double fs = std::max(0.0, 0.3 * 0.7 + 0.2 + 0.2);
  // g1 = d * v * (v f - v* f*) with d the gate of the student node.
  const double expect = 1.0 * 2.0 * (2.0 * f - (-1.5) * fs);
  CHECK(measure_g1_sup(s, t, {x}) == doctest::Approx(std::abs(expect)).epsilon(1e-14));
}

TEST_CASE("observation checks") {
  const SubspaceBasis b = identity_basis(2);
  const BallRegion region{&b, 1.0};
  Rng rng(2);
  const Vec wj = {1.0, 0.5, 0.2};
  CHECK(check_observation(wj, wj, region, 100, rng).observed);
  const Vec dead = {-1.0, -0.5, -50.0};
  CHECK_FALSE(check_observation(wj, dead, region, 100, rng).observed);
  const Vec far = {1.0, 0.0, 5.0};
  CHECK(check_observation(far, wj, region, 100, rng).empty_intersection);
}

TEST_CASE("observation agrees with a dense grid in two dimensions") {
  const SubspaceBasis b = identity_basis(2);
  const BallRegion region{&b, 1.0};
  Rng rng(3);
  int compared = 0;
  for (int t = 0; t < 300; ++t) {
    Vec wj = {rng.normal(), rng.normal(), rng.uniform(-0.8, 0.8)};
    Vec wk = {rng.normal(), rng.normal(), rng.normal()};
    // Walk the chord {wjᵀ[x;1] = 0} inside the unit disc on a fine grid.
    const double n = std::hypot(wj[0], wj[1]);
    const double delta = -wj[2] / n;
    if (std::abs(delta) >= 1.0) continue;
    const double half = std::sqrt(1.0 - delta * delta);
    const double px = delta * wj[0] / n, py = delta * wj[1] / n;
    const double tx = -wj[1] / n, ty = wj[0] / n;
    double best = -1e300;
    for (int i = 0; i <= 20000; ++i) {
      const double s = -half + 2.0 * half * i / 20000.0;
      best = std::max(best, wk[0] * (px + s * tx) + wk[1] * (py + s * ty) + wk[2]);
    }
    if (std::abs(best) < 1e-3) continue;
    ++compared;
    Rng probe(static_cast<std::uint64_t>(t));
    CHECK(check_observation(wj, wk, region, 4000, probe).observed == (best > 0.0));
  }
  CHECK(compared > 200);
}

TEST_CASE("inscribed radius") {
  const SubspaceBasis b = identity_basis(3);
  const BallRegion region{&b, 1.0};
  CHECK(inscribed_radius(Vec{1.0, 0.0, 0.0, 0.0}, region) == 1.0);
  CHECK(inscribed_radius(Vec{1.0, 0.0, 0.0, -1.0}, region) == 0.0);
  CHECK(inscribed_radius(Vec{2.0, 0.0, 0.0, -1.2}, region) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(boundary_offset(Vec{2.0, 0.0, 0.0, -1.2}, b) == doctest::Approx(-0.6));
  CHECK(boundary_offset(Vec{2.0, 0.0, 0.0, 1.2}, b) == doctest::Approx(0.6));
  Rng rng(4);
  const double est = inscribed_radius_sampled(Vec{2.0, 0.0, 0.0, -1.2}, region, 4000, rng);
  CHECK(est == doctest::Approx(0.8).epsilon(0.05));

  SubspaceBasis low;
  low.U = Matrix(4, 2);
  low.U(0, 0) = 1.0;
  low.U(1, 1) = 1.0;
  const BallRegion lr{&low, 2.0};
  // Out-of-plane kernel components do not move the boundary.
  CHECK(inscribed_radius(Vec{1.0, 0.0, 7.0, 3.0, 0.0}, lr) == 2.0);
}

TEST_CASE("projected angles") {
  const Matrix U = Matrix::identity(2);
  CHECK(projected_sin(Vec{1.0, 0.0}, Vec{3.0, 0.0}, U) == 0.0);
  CHECK(projected_sin(Vec{1.0, 0.0}, Vec{0.0, 2.0}, U) == doctest::Approx(1.0));
  CHECK(projected_sin(Vec{1.0, 0.0}, Vec{-1.0, 0.1}, U) == 1.0);
  CHECK(projected_cos(Vec{1.0, 1.0}, Vec{1.0, 0.0}, U) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("teacher copy passes every check immediately") {
  for (bool low : {false, true}) {
    TheorySpec spec;
    spec.copy_teacher = true;
    if (low) {
      spec.ambient_dim = 10;
      spec.subspace_dim = 4;
      spec.biases = false;
    }
    TheoryInstance inst = make_theory_instance(spec);
    const auto conv = train_to_convergence(inst);
    CHECK(conv.g1_sup == 0.0);
    CHECK(conv.epochs == 0);
    const auto t1 = verify_theorem1(inst, conv.g1_sup);
    CHECK(t1.conclusive);
    CHECK(t1.specialization_pass);
    CHECK(t1.freezing_pass);
    const BallRegion region{&inst.data.basis, spec.radius};
    const auto t2 = verify_theorem2(inst.student, inst.teacher, region, inst.inputs, conv.g1_sup);
    CHECK(t2.constant_level_pass);
    for (const auto& n : t2.nodes) CHECK(n.best_in_plane_sin < 1e-12);
    CHECK(theorem2_trend(inst, conv).pass);
    CHECK(verify_corollary1(inst.student, inst.teacher, region, inst.inputs, conv.g1_sup).qualitative_pass);
  }
}

TEST_CASE("teacher construction") {
  TheorySpec spec;
  spec.ambient_dim = 10;
  spec.subspace_dim = 4;
  spec.biases = false;
  const TheoryInstance inst = make_theory_instance(spec);
  const BallRegion region{&inst.data.basis, spec.radius};
  for (std::size_t j = 0; j < spec.teacher_hidden; ++j) {
    const Vec w = node_weight(inst.teacher, 0, j);
    CHECK(inscribed_radius(w, region) == doctest::Approx(1.0));
    CHECK(norm2(node_fanout(inst.teacher, 0, j)) >= 0.5);
  }
  TheorySpec bad = spec;
  bad.subspace_dim = 11;
  CHECK_THROWS(make_theory_instance(bad));
}

TEST_CASE("corollary: a silent extra node is trivially bounded") {
  TheorySpec spec;
  spec.copy_teacher = true;
  TheoryInstance inst = make_theory_instance(spec);
  // Teacher plus an extra student node cutting the ball, with zero fan-out.
  Rng rng(5);
  Network s = make_dense_net(spec.ambient_dim, {spec.teacher_hidden + 1}, spec.classes, true, rng);
  for (std::size_t j = 0; j < spec.teacher_hidden; ++j) {
    const Vec w = node_weight(inst.teacher, 0, j);
    std::copy(w.begin(), w.end() - 1, s.layers[0].weight.begin() + static_cast<std::ptrdiff_t>(j * spec.ambient_dim));
    s.layers[0].bias[j] = w.back();
    set_node_fanout(s, 0, j, node_fanout(inst.teacher, 0, j));
  }
  const std::size_t extra = spec.teacher_hidden;
  s.layers[0].bias[extra] = 0.0;
  set_node_fanout(s, 0, extra, Vec(spec.classes, 0.0));
  s.layers[1].bias = inst.teacher.layers[1].bias;
  const BallRegion region{&inst.data.basis, spec.radius};
  CHECK(measure_g1_sup(s, inst.teacher, inst.inputs) == 0.0);
  const auto rep = verify_corollary1(s, inst.teacher, region, inst.inputs, 0.0);
  const auto& node = rep.nodes[extra];
  CHECK(node.fanout_norm == 0.0);
  CHECK(node.bound_satisfied);
  if (node.bound) CHECK(*node.bound == 0.0);
  CHECK(rep.qualitative_pass);
}
