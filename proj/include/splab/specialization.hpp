#pragma once

#include <limits>
#include <optional>

#include "splab/linalg.hpp"
#include "splab/network.hpp"

namespace splab {

/// Pearson correlation of two activation vectors. A zero-variance (dead)
/// node correlates 0 with everything.
double nc(std::span<const double> a, std::span<const double> b);

/// Pearson correlation; throws Error on zero variance or length < 2.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Streaming NC over paired node activations. Each call to add() supplies one
/// observation of every student node and every teacher node.
class NcAccumulator {
 public:
  NcAccumulator(std::size_t students, std::size_t teachers);
  void add(std::span<const double> student, std::span<const double> teacher);
  /// students x teachers matrix of NC values.
  Matrix result() const;
  std::size_t count() const { return n_; }

 private:
  std::size_t ns_, nt_, n_ = 0;
  Vec shift_s_, shift_t_;
  Vec sum_s_, sum_t_, sq_s_, sq_t_;
  Vec cross_;
};

struct LayerNc {
  Matrix nc;                             // student nodes x teacher nodes
  Vec bnc;                               // per teacher node
  std::vector<std::size_t> best_student; // argmax student per teacher node
  double mbnc = 0.0;
  Vec sorted_bnc;                        // descending
};

struct NcReport {
  std::vector<LayerNc> layers;  // one per hidden layer
};

/// Hidden layer l of the student against hidden layer l of the teacher.
/// Conv nodes contribute every spatial position of every sample.
NcReport nc_report(const Network& student, const Network& teacher, const std::vector<Vec>& eval_set);
LayerNc summarize_nc(Matrix nc);

struct EpsInOut {
  Matrix eps_in;   // student nodes x teacher nodes
  Matrix eps_out;
  /// Per teacher node j paired with its highest-NC student; sorted ascending.
  Vec sorted_in;
  Vec sorted_out;
  /// Unsorted paired values, aligned with teacher node index.
  Vec paired_nc;
  Vec paired_in;
  Vec paired_out;
};

/// Normalised kernel difference w_k/‖w_k‖ − w*_j/‖w*_j‖ (bias excluded).
Vec normalized_delta(std::span<const double> wk, std::span<const double> wj);

/// First-layer in/out-of-subspace components of the normalised kernel
/// differences. `first_layer_nc` selects each teacher node's partner.
EpsInOut eps_in_out(const Network& student, const Network& teacher, const SubspaceBasis& basis,
                    const Matrix& first_layer_nc);

struct RatioReport {
  std::size_t unspecialized = 0;  // best NC < low
  std::size_t specialized = 0;    // best NC > high
  double ratio = 0.0;
  bool infinite = false;          // no specialized student
  std::vector<std::size_t> histogram;  // per teacher node: students with NC > high
};

RatioReport ratios_and_histogram(const Matrix& nc, double low = 0.8, double high = 0.9);

struct SpecializationReport {
  NcReport nc;
  std::vector<RatioReport> ratios;
  std::optional<EpsInOut> eps;
  /// Pearson over (BNC_j, ε_in of the paired student); NaN when unavailable.
  double pearson_nc_epsin = std::numeric_limits<double>::quiet_NaN();
};

SpecializationReport specialization_report(const Network& student, const Network& teacher,
                                           const std::vector<Vec>& eval_set, const SubspaceBasis* basis = nullptr);

}  // namespace splab
