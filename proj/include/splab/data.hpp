#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "splab/linalg.hpp"
#include "splab/rng.hpp"
#include "splab/tensor.hpp"

namespace splab {

// ---------------------------------------------------------------------------
// Synthetic low-rank data
// ---------------------------------------------------------------------------

enum class RegionKind { ball, box };

/// Data region expressed in subspace coordinates y (x = U y + x0).
struct Region {
  RegionKind kind = RegionKind::ball;
  double radius = 1.0;
  Vec half_widths;

  bool contains(std::span<const double> y) const;
  Vec sample(std::size_t dim, Rng& rng) const;
};

struct SyntheticSpec {
  std::size_t ambient_dim = 0;
  std::size_t subspace_dim = 0;
  Region region;
  Vec offset;  // empty means the origin
  std::size_t sample_count = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  Matrix samples;        // N x d
  SubspaceBasis basis;   // exact U (d x d'), offset x0
  Region region;
};

/// Samples x = U y + x0 with y uniform in the region and U a random
/// orthonormal d x d' frame (identity columns when d' = d).
SyntheticData gen_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

struct ImageDataset {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  Vec pixels;  // N x C x H x W, values in [0, 1]
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
  std::span<const double> image(std::size_t i) const { return {pixels.data() + i * image_size(), image_size()}; }
  std::span<double> image(std::size_t i) { return {pixels.data() + i * image_size(), image_size()}; }
  std::vector<std::size_t> shape() const { return {channels, height, width}; }
  /// First n images (or all if n >= size()).
  ImageDataset head(std::size_t n) const;
  std::vector<Vec> as_vectors() const;
};

class CifarError : public Error {
 public:
  enum class Kind { missing_file, bad_size, io };
  CifarError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordsPerBatch = 10000;

/// Reads one binary batch: records of 1 label byte followed by 3072 pixel
/// bytes (R plane, G plane, B plane). When `expected_records` is set the file
/// must hold exactly that many records.
ImageDataset read_cifar_batch(const std::filesystem::path& path,
                              std::optional<std::size_t> expected_records = std::nullopt);

struct Cifar10 {
  ImageDataset train;
  ImageDataset test;
};

/// Loads data_batch_{1..5}.bin and test_batch.bin from `dir`.
Cifar10 load_cifar10(const std::filesystem::path& dir);
bool cifar10_available(const std::filesystem::path& dir);

/// Smooth random images with low-rank patch statistics; a stand-in when the
/// real dataset is not installed. Labels are zero.
ImageDataset gen_smooth_images(std::size_t count, std::uint64_t seed, std::size_t channels = 3,
                               std::size_t height = 32, std::size_t width = 32);

/// Every 3x3 window (stride 1, no padding) across all channels, flattened
/// channel-major to match conv kernel layout. M = N * (H-2) * (W-2).
Matrix extract_patches(const ImageDataset& images, std::size_t ksize = 3);
void write_patches_csv(const Matrix& patches, const std::filesystem::path& path);

enum class AugmentKind { random_crop, horizontal_flip, rotation, gaussian };

struct AugmentOptions {
  double sigma = 0.1;
  std::size_t crop_padding = 4;
  double max_rotation_deg = 15.0;
};

/// Returns an augmented copy of a C x H x W image.
Vec augment(std::span<const double> image, const std::vector<std::size_t>& shape, AugmentKind kind, Rng& rng,
            const AugmentOptions& opts = {});
Vec horizontal_flip(std::span<const double> image, const std::vector<std::size_t>& shape);

}  // namespace splab
