#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "splab/data.hpp"

using namespace splab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "splab_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

std::string cifar_record(unsigned char label, unsigned char fill) {
  std::string r(kCifarRecordBytes, static_cast<char>(fill));
  r[0] = static_cast<char>(label);
  return r;
}

}  // namespace

TEST_CASE("synthetic data lies in the subspace") {
  SyntheticSpec spec;
  spec.ambient_dim = 10;
  spec.subspace_dim = 4;
  spec.sample_count = 5000;
  spec.seed = 3;
  const auto d = gen_synthetic(spec);
  for (std::size_t i = 0; i < d.samples.rows; ++i) CHECK(distance_to_subspace(d.basis, d.samples.row(i)) <= 1e-12);

  const auto est = pca_fit(d.samples, OffsetMode::mean).truncated(4);
  for (double a : principal_angles(est.U, d.basis.U)) CHECK(a < 0.05);

  for (std::size_t i = 0; i < d.samples.rows; ++i) {
    const Vec y = matvec_t(d.basis.U, d.samples.row(i));
    CHECK(norm2(y) <= 1.0 + 1e-12);
  }
}

TEST_CASE("full-rank synthetic data has full-rank covariance") {
  SyntheticSpec spec;
  spec.ambient_dim = 3;
  spec.subspace_dim = 3;
  spec.sample_count = 500;
  const auto d = gen_synthetic(spec);
  const auto b = pca_fit(d.samples, OffsetMode::mean);
  for (double e : b.eigenvalues) CHECK(e > 1e-3);
}

TEST_CASE("synthetic data is seeded") {
  SyntheticSpec spec;
  spec.ambient_dim = 5;
  spec.subspace_dim = 2;
  spec.sample_count = 10;
  spec.seed = 11;
  CHECK(gen_synthetic(spec).samples.data == gen_synthetic(spec).samples.data);
  SyntheticSpec bad = spec;
  bad.subspace_dim = 6;
  CHECK_THROWS(gen_synthetic(bad));
}

TEST_CASE("cifar batch parsing") {
  const auto p = temp_file("two.bin");
  std::string bytes = cifar_record(6, 0) + cifar_record(3, 255);
  bytes[1] = 59;
  write_bytes(p, bytes);
  const auto ds = read_cifar_batch(p);
  REQUIRE(ds.size() == 2);
  CHECK(ds.labels[0] == 6);
  CHECK(ds.labels[1] == 3);
  CHECK(ds.pixels[0] == 59.0 / 255.0);
  CHECK(ds.image(1)[3071] == 1.0);
}

TEST_CASE("cifar loader rejects malformed input with distinct errors") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const CifarError& e) {
      return e.kind();
    }
    FAIL("no error");
    return CifarError::Kind::io;
  };
  const auto short_file = temp_file("short.bin");
  write_bytes(short_file, cifar_record(1, 0).substr(0, 1000));
  CHECK(kind_of([&] { read_cifar_batch(short_file); }) == CifarError::Kind::bad_size);
  const auto two = temp_file("two_records.bin");
  write_bytes(two, cifar_record(1, 0) + cifar_record(2, 0));
  CHECK(kind_of([&] { read_cifar_batch(two, 10000); }) == CifarError::Kind::bad_size);
  CHECK(kind_of([&] { read_cifar_batch(temp_file("absent.bin")); }) == CifarError::Kind::missing_file);
  CHECK(kind_of([&] { load_cifar10(temp_file("no_such_dir")); }) == CifarError::Kind::missing_file);
  CHECK_FALSE(cifar10_available(temp_file("no_such_dir")));
}

TEST_CASE("patch extraction") {
  ImageDataset ds;
  ds.labels = {0};
  ds.pixels.assign(3 * 32 * 32, 0.25);
  Matrix p = extract_patches(ds);
  CHECK(p.rows == 900);
  CHECK(p.cols == 27);
  for (double v : p.data) CHECK(v == 0.25);

  ImageDataset cb;
  cb.channels = 1;
  cb.height = 4;
  cb.width = 4;
  cb.labels = {0};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) cb.pixels.push_back(static_cast<double>((x + y) % 2));
  p = extract_patches(cb);
  CHECK(p.rows == 4);
  const Vec first(p.row(0).begin(), p.row(0).end());
  CHECK(first == Vec{0, 1, 0, 1, 0, 1, 0, 1, 0});
  const Vec second(p.row(1).begin(), p.row(1).end());
  CHECK(second == Vec{1, 0, 1, 0, 1, 0, 1, 0, 1});
}

TEST_CASE("augmentation") {
  Rng rng(1);
  const std::vector<std::size_t> shape = {3, 8, 8};
  Vec img(192);
  for (double& v : img) v = rng.uniform();
  CHECK(horizontal_flip(horizontal_flip(img, shape), shape) == img);
  AugmentOptions zero;
  zero.sigma = 0.0;
  CHECK(augment(img, shape, AugmentKind::gaussian, rng, zero) == img);

  const std::vector<std::size_t> big = {1, 100, 1000};
  const Vec flat(100000, 0.5);
  const Vec noisy = augment(flat, big, AugmentKind::gaussian, rng);
  double mean = 0.0, sq = 0.0;
  for (double v : noisy) mean += (v - 0.5) / 1e5;
  for (double v : noisy) sq += (v - 0.5 - mean) * (v - 0.5 - mean) / 1e5;
  const double sd = std::sqrt(sq);
  CHECK(sd >= 0.095);
  CHECK(sd <= 0.105);

  for (auto kind : {AugmentKind::random_crop, AugmentKind::rotation, AugmentKind::horizontal_flip}) {
    Rng a(5), b(5);
    CHECK(augment(img, shape, kind, a) == augment(img, shape, kind, b));
  }
  CHECK_THROWS_AS(augment(img, {3, 8, 7}, AugmentKind::horizontal_flip, rng), ShapeError);
}

TEST_CASE("smooth images have low-rank patches") {
  const auto ds = gen_smooth_images(20, 1);
  for (double v : ds.pixels) CHECK((v >= 0.0 && v <= 1.0));
  const auto b = pca_fit(extract_patches(ds), OffsetMode::zero);
  for (std::size_t i = 1; i < b.eigenvalues.size(); ++i) CHECK(b.eigenvalues[i - 1] >= b.eigenvalues[i]);
  CHECK(b.dims_for_variance(0.99) < 27);
}
