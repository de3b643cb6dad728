#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splab/attacks.hpp"
#include "splab/theory.hpp"
#include "splab/training.hpp"

namespace splab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class DatasetKind { synthetic, smooth_images, cifar10 };

struct DatasetSection {
  DatasetKind kind = DatasetKind::smooth_images;
  std::string dir;                 // cifar10
  std::size_t train_count = 512;
  std::size_t eval_count = 256;    // held-out images for NC and robust accuracy
  std::size_t height = 32;         // smooth_images
  std::size_t width = 32;
  // synthetic
  std::size_t ambient_dim = 6;
  std::size_t subspace_dim = 6;
  double radius = 1.0;
};

struct TeacherSection {
  std::string arch = "conv";       // conv | dense
  std::vector<std::size_t> hidden = {32, 32, 32, 32};
  std::size_t classes = 10;
  bool biases = true;
  std::string checkpoint;          // load instead of building
  std::size_t train_epochs = 0;    // supervised on dataset labels; 0 keeps the random init
  double train_lr = 0.01;
  double prune_ratio = 0.0;
};

struct StudentSection {
  double scale = 1.1;              // width relative to the (pruned) teacher
  std::vector<std::size_t> hidden; // overrides scale when set
  std::string checkpoint;
};

struct RegimeSection {
  std::vector<std::string> names = {"st_logit"};
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  std::string schedule = "constant";
  std::vector<std::string> augmentations;
  double sigma = 0.1;
  std::vector<double> ccat_rho = {10.0};
  double rft_alpha = 0.5;
  std::size_t rft_steps = 200;
  double rft_step_size = 0.1;
  std::string robust_model;        // checkpoint; trained with AT when empty
  std::vector<std::size_t> epoch_grid;  // evaluated and checkpointed epochs
};

struct AttackSection {
  std::string norm = "linf";
  double epsilon = 10.0 / 255.0;
  double step_size = 0.01;
  std::size_t iterations = 40;
  std::string mode = "oracle";
  std::string loss = "l2_logits";
  bool random_init = true;
  double clip_lo = 0.0;
  double clip_hi = 1.0;
  std::size_t train_iterations = 10;   // PGD steps inside adversarial training
};

struct MetricsSection {
  bool robust_accuracy = true;
  bool nc = true;
  bool eps_in_out = true;
  std::size_t patch_pca_dims = 17;
  std::vector<std::string> attacks = {"linf_pgd"};
  std::size_t n_repeats = 1;
  double l2_epsilon = 0.5;
  double l1_epsilon = 10.0;
  std::string surrogate;           // checkpoint for the transfer attack
  std::vector<std::string> students;  // checkpoints compared by evaluate/specialize
};

TheorySpec default_lowrank_spec();

struct TheorySection {
  std::vector<std::string> variants = {"fullrank", "lowrank"};
  TheorySpec fullrank;
  TheorySpec lowrank = default_lowrank_spec();
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::string output = "out";
  DatasetSection dataset;
  TeacherSection teacher;
  StudentSection student;
  RegimeSection regime;
  AttackSection attack;
  MetricsSection metrics;
  TheorySection theory;

  /// Throws ConfigError on out-of-range values or missing referenced paths.
  void validate() const;
  AttackSpec attack_spec() const;
  TrainConfig train_config(Regime r) const;
};

/// Parses JSON text. Unknown keys and type mismatches raise ConfigError
/// naming the offending line.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON (sorted keys, two-space indent).
std::string serialize_config(const ExperimentConfig& cfg);
/// FNV-1a 64 of the canonical serialisation, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

Norm norm_from_string(const std::string& s);
AttackMode mode_from_string(const std::string& s);
AttackLoss loss_from_string(const std::string& s);
AugmentKind augment_from_string(const std::string& s);
std::string to_string(Norm n);
std::string to_string(AttackMode m);
std::string to_string(AttackLoss l);
std::string to_string(AugmentKind a);

}  // namespace splab
