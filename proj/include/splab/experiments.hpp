#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "splab/config.hpp"
#include "splab/specialization.hpp"
#include "splab/theory.hpp"

namespace splab {

struct ExperimentData {
  std::vector<std::size_t> input_shape;
  std::vector<Vec> train;
  std::vector<std::uint8_t> train_labels;  // empty for unlabeled data
  std::vector<Vec> eval;
  std::optional<ImageDataset> train_images;
  std::optional<SubspaceBasis> exact_basis;  // synthetic data only
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

/// Mini-batch SGD on cross-entropy against dataset labels.
void train_supervised(Network& net, const std::vector<Vec>& inputs, const std::vector<std::uint8_t>& labels,
                      std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed);

/// Loads teacher.checkpoint, or builds a fresh teacher, optionally trains it
/// on the dataset labels and prunes it.
Network build_teacher(const ExperimentConfig& cfg, const ExperimentData& data);
/// Student with the teacher's architecture and ceil(scale * width) nodes per
/// hidden layer, or the explicit widths when given.
Network build_student(const ExperimentConfig& cfg, const Network& teacher, Rng& rng);
std::vector<std::size_t> scaled_widths(const Network& teacher, double scale);

/// Basis used for ε_in/ε_out: the exact U for synthetic data, patch PCA for
/// conv first layers, input PCA (95% variance) for dense ones.
SubspaceBasis first_layer_basis(const ExperimentConfig& cfg, const ExperimentData& data, const Network& teacher);
/// Global input PCA retaining `fraction` of the variance.
SubspaceBasis input_basis(const std::vector<Vec>& inputs, double fraction = 0.95);

struct GridPoint {
  std::string label;
  std::size_t epoch = 0;
  double loss = 0.0;
  double clean_agreement = 0.0;
  double robust_accuracy = std::numeric_limits<double>::quiet_NaN();
  Vec mbnc;
};

struct RegimeRunOptions {
  std::vector<std::size_t> grid;
  const std::vector<Vec>* eval = nullptr;
  std::optional<AttackSpec> robust_eval;
  std::size_t robust_count = 256;
  std::uint64_t eval_seed = 0;
  bool nc = false;
  std::function<void(const std::string&, std::size_t, const Network&)> on_checkpoint;
};

struct RegimeRun {
  std::string label;
  TrainResult result;
  std::vector<GridPoint> grid;
};

RegimeRun run_regime(const std::string& label, const TrainConfig& cfg, const Network& teacher,
                     const Network& student_init, const std::vector<Vec>& train, const RegimeRunOptions& opts);

/// Tracks written artifacts and emits manifest.json with the config hash.
/// Entries from an existing manifest in the same directory are kept unless
/// the file is written again.
class Manifest {
 public:
  Manifest(std::filesystem::path dir, std::string config_hash, std::string command);
  std::filesystem::path path(const std::string& file);
  void write() const;

 private:
  std::filesystem::path dir_;
  std::string hash_;
  std::string command_;
  std::vector<std::string> files_;
  std::map<std::string, std::pair<std::string, std::string>> previous_;  // file -> (hash, command)
};

void write_grid_csv(const std::vector<GridPoint>& grid, const std::filesystem::path& path);
void write_specialization(const SpecializationReport& rep, const std::string& label, Manifest& manifest);

struct TheoryVariantResult {
  std::string variant;
  ConvergenceResult convergence;
  Theorem1Report theorem1;
  TheoryReport theorem2;
  TrendReport trend;
  Corollary1Report corollary1;
  double g1_sup_probe = 0.0;  // sup over fresh samples from the data region
};

TheoryVariantResult run_theory_variant(const std::string& variant, const TheorySpec& spec);

// ---------------------------------------------------------------------------
// Desk-scale image benchmark
// ---------------------------------------------------------------------------

struct DeskScaleOptions {
  std::size_t train_count = 10000;
  std::size_t eval_count = 512;
  std::size_t robust_count = 256;
  std::vector<std::size_t> teacher_channels = {32, 32, 32, 32};
  std::size_t teacher_epochs = 10;
  double teacher_lr = 0.01;
  double prune_ratio = 0.1;
  double student_scale = 1.1;
  std::size_t epochs = 30;
  std::vector<std::size_t> grid = {10, 20, 30};
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  std::size_t at_iterations = 10;
  std::size_t eval_iterations = 40;
  std::vector<double> ccat_rho = {5.0, 10.0, 20.0};
  std::size_t patch_pca_dims = 17;
  std::size_t rft_epochs = 10;
  std::size_t rft_count = 2000;
  RobustFeatureOptions rft;
  std::uint64_t seed = 0;
  double tolerance = 0.02;
  std::function<void(const std::string&)> log;
};

struct DeskScaleResult {
  std::vector<GridPoint> grid;  // all regimes and grid epochs
  std::map<std::string, double> final_robust;
  std::map<std::string, Vec> final_mbnc;
  double pearson_nc_epsin = std::numeric_limits<double>::quiet_NaN();
  double rft_robust = std::numeric_limits<double>::quiet_NaN();
  double rft_baseline_robust = std::numeric_limits<double>::quiet_NaN();
  bool a_robust_order = false;
  bool b_mbnc = false;
  bool c_pearson = false;
  bool d_monotone = false;
  bool e_ccat = false;
  bool rft_better = false;
};

DeskScaleResult run_desk_scale(const ImageDataset& train, const ImageDataset& test, const DeskScaleOptions& opts);

}  // namespace splab
