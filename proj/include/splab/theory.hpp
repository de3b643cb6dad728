#pragma once

#include <optional>
#include <string>

#include "splab/data.hpp"
#include "splab/network.hpp"

namespace splab {

struct TheorySpec {
  std::size_t ambient_dim = 6;
  std::size_t subspace_dim = 6;
  std::size_t teacher_hidden = 3;
  std::size_t student_hidden = 6;
  std::size_t classes = 2;
  std::size_t samples = 4096;
  double radius = 1.0;
  bool biases = true;
  std::uint64_t seed = 3;
  /// Start the student as an exact copy of the teacher.
  bool copy_teacher = false;

  // Full-batch gradient descent on ½‖s − t‖² until g1_sup <= g1_target.
  double learning_rate = 0.3;
  std::size_t max_epochs = 20000;
  std::size_t check_every = 250;
  double g1_target = 1e-3;
  /// Damped Gauss-Newton refinement once gradient descent has stalled.
  bool polish = true;
  std::size_t polish_iterations = 200;

  void validate() const;
};

struct TheoryInstance {
  TheorySpec spec;
  Network teacher;
  Network student;
  Network student_init;
  SyntheticData data;
  std::vector<Vec> inputs;
};

/// Two-layer ReLU teacher with unit, pairwise non-colinear kernels whose
/// boundaries cut the data ball. Without biases every boundary passes
/// through the ball centre.
Network make_theory_teacher(const TheorySpec& spec, const SubspaceBasis& basis, Rng& rng);
TheoryInstance make_theory_instance(const TheorySpec& spec);

/// sup over samples and hidden units of |g1| for the L2 logit loss.
double measure_g1_sup(const Network& student, const Network& teacher, const std::vector<Vec>& inputs);

struct ConvergenceSnapshot {
  std::size_t epoch = 0;
  double g1_sup = 0.0;
  Network student;
};

struct ConvergenceResult {
  bool converged = false;
  double g1_sup = 0.0;
  std::size_t epochs = 0;
  std::size_t polish_iterations = 0;
  std::vector<ConvergenceSnapshot> snapshots;
};

/// Trains inst.student in place.
ConvergenceResult train_to_convergence(TheoryInstance& inst);

/// Geometry of the data region: ball of `radius` about x0 inside span(U).
struct BallRegion {
  const SubspaceBasis* basis = nullptr;
  double radius = 1.0;
};

struct ObservationResult {
  bool observed = false;
  /// The boundary of j misses the region, so nothing can observe it.
  bool empty_intersection = false;
};

/// Samples n_probe points on {w_jᵀ[x;1] = 0} inside the region and reports
/// whether any lies in the active region of w_k (augmented weights).
ObservationResult check_observation(std::span<const double> w_j, std::span<const double> w_k,
                                    const BallRegion& region, std::size_t n_probe, Rng& rng);

/// Signed distance, in subspace coordinates, from the ball centre to the
/// boundary of the augmented weight w; positive when the centre lies on the
/// active side. Infinite when w̃ is orthogonal to U.
double boundary_offset(std::span<const double> w, const SubspaceBasis& basis);
/// √(r0² − δ²), or 0 when the boundary misses the ball.
double inscribed_radius(std::span<const double> w, const BallRegion& region);
/// Estimate of the same radius from n_probe boundary samples: distance from
/// their centroid to the rim of the slice along random in-slice directions.
double inscribed_radius_sampled(std::span<const double> w, const BallRegion& region, std::size_t n_probe,
                                Rng& rng);

/// sin of the angle between Proj_U w̃_a and Proj_U w̃_b; 1 when they point
/// away from each other or either projection vanishes.
double projected_sin(std::span<const double> a, std::span<const double> b, const Matrix& U);
double projected_cos(std::span<const double> a, std::span<const double> b, const Matrix& U);

struct Theorem1Node {
  std::size_t teacher_node = 0;
  bool observed = false;
  std::size_t best_student = 0;
  double cosine = 0.0;           // in-plane (projected) kernel cosine
  double augmented_cosine = 0.0; // full augmented weights, full-rank only
  double lambda = 0.0;           // ‖Proj w_k‖ / ‖Proj w*_j‖ signed by the cosine
};

struct Theorem1Report {
  bool conclusive = false;
  double g1_sup = 0.0;
  std::vector<Theorem1Node> nodes;
  /// Per student node: ‖out(w_k) − out(w_k,init)‖ / ‖out(w_k,init)‖.
  Vec out_of_plane_drift;
  bool specialization_pass = false;
  bool freezing_pass = false;  // vacuous when d' = d
  std::vector<std::string> warnings;
};

Theorem1Report verify_theorem1(const TheoryInstance& inst, double g1_sup, double cosine_threshold = 0.999,
                               double drift_threshold = 1e-10, std::size_t n_probe = 2000);

struct Theorem2Node {
  std::size_t teacher_node = 0;
  std::vector<std::size_t> observed_by;
  std::size_t best_student = 0;
  double best_in_plane_sin = 1.0;
  double best_out_plane_sin = 1.0;  // 1 when the complement is trivial
  double alpha = 0.0;               // largest v*_jᵀv_k over observers
  std::size_t alpha_student = 0;
  double radius = 0.0;
  double M = 0.0;
  double bound = 0.0;
  bool satisfied = false;
};

struct TheoryReport {
  double g1_sup = 0.0;
  std::size_t K = 0;
  double M0 = 0.0;
  double M2 = 0.0;
  std::vector<Theorem2Node> nodes;
  std::vector<std::string> warnings;
  bool constant_level_pass = false;
};

/// Theorem-2 bound with M_j = (10/r_j)√(d'/2π), K = teacher + student hidden nodes.
TheoryReport verify_theorem2(const Network& student, const Network& teacher, const BallRegion& region,
                             const std::vector<Vec>& inputs, double g1_sup, std::size_t n_probe = 2000,
                             std::uint64_t seed = 0);

struct TrendReport {
  bool pass = false;
  double final_max_sin = 1.0;
  /// (g1_sup, max over teacher nodes of best in-plane sin) per snapshot,
  /// ordered by decreasing g1_sup.
  std::vector<std::pair<double, double>> curve;
};

/// Trend-level check: once ε is below `trend_start`, the worst in-plane sin
/// shrinks with ε (within `tolerance`) and ends at or below `final_threshold`.
TrendReport theorem2_trend(const TheoryInstance& inst, const ConvergenceResult& conv, double final_threshold = 0.05,
                           double tolerance = 0.02, double trend_start = 0.1);

struct CorollaryNode {
  std::size_t student_node = 0;
  double c0 = 0.0;
  double fanout_norm = 0.0;
  bool specialized = false;    // aligned with a teacher node
  /// Boundary cuts the data ball and at least `min_side_fraction` of the
  /// training samples lie on each side of it.
  bool boundary_in_region = false;
  double active_fraction = 0.0;
  std::optional<double> bound; // empty when fewer than C observers or Q singular
  std::string flag;
  bool bound_satisfied = true;
};

struct Corollary1Report {
  std::vector<CorollaryNode> nodes;
  double median_specialized_fanout = 0.0;
  bool qualitative_pass = false;
  bool bound_pass = false;
  std::size_t checked = 0;  // nodes with c0 above the floor
};

struct CorollaryOptions {
  double c0_floor = 0.3;
  double fanout_ratio = 0.1;
  double specialized_sin = 0.05;
  double min_side_fraction = 0.01;
  std::size_t n_probe = 2000;
  std::uint64_t seed = 0;
};

Corollary1Report verify_corollary1(const Network& student, const Network& teacher, const BallRegion& region,
                                   const std::vector<Vec>& inputs, double g1_sup, const CorollaryOptions& opts = {});

void write_theorem2_csv(const TheoryReport& rep, const std::string& path);

}  // namespace splab
