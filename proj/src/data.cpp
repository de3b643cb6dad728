#include "splab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace splab {

bool Region::contains(std::span<const double> y) const {
  if (kind == RegionKind::ball) return norm2(y) <= radius;
  if (half_widths.size() != y.size()) throw ShapeError("Region::contains: box dimension mismatch");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(y[i]) > half_widths[i]) return false;
  return true;
}

Vec Region::sample(std::size_t dim, Rng& rng) const {
  Vec y(dim);
  if (kind == RegionKind::ball) {
    double n = 0.0;
    do {
      for (double& v : y) v = rng.normal();
      n = norm2(y);
    } while (n == 0.0);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    for (double& v : y) v *= r / n;
    return y;
  }
  if (half_widths.size() != dim) throw ShapeError("Region::sample: box dimension mismatch");
  for (std::size_t i = 0; i < dim; ++i) y[i] = rng.uniform(-half_widths[i], half_widths[i]);
  return y;
}

void SyntheticSpec::validate() const {
  if (subspace_dim < 1 || subspace_dim > ambient_dim)
    throw Error("synthetic spec: need 1 <= subspace_dim <= ambient_dim");
  if (region.kind == RegionKind::ball && !(region.radius > 0.0)) throw Error("synthetic spec: radius must be > 0");
  if (region.kind == RegionKind::box) {
    if (region.half_widths.size() != subspace_dim) throw Error("synthetic spec: box needs subspace_dim half widths");
    for (double h : region.half_widths)
      if (!(h > 0.0)) throw Error("synthetic spec: half widths must be > 0");
  }
  if (!offset.empty() && offset.size() != ambient_dim) throw Error("synthetic spec: offset length != ambient_dim");
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t d = spec.ambient_dim, k = spec.subspace_dim;
  Rng rng(spec.seed);
  Rng frame_rng = rng.derive(0);
  Rng sample_rng = rng.derive(1);

  Matrix U(d, k);
  if (k == d) {
    U = Matrix::identity(d);
  } else {
    for (double& v : U.data) v = frame_rng.normal();
    U = orthonormalize_columns(U);
  }

  SyntheticData out;
  out.region = spec.region;
  out.basis.U = U;
  out.basis.offset = spec.offset.empty() ? Vec(d, 0.0) : spec.offset;
  // Per-axis variance of the region inside the subspace, then zeros.
  out.basis.eigenvalues.assign(d, 0.0);
  if (spec.region.kind == RegionKind::ball) {
    const double var = spec.region.radius * spec.region.radius / static_cast<double>(k + 2);
    for (std::size_t i = 0; i < k; ++i) out.basis.eigenvalues[i] = var;
  } else {
    Vec vars;
    for (double h : spec.region.half_widths) vars.push_back(h * h / 3.0);
    std::sort(vars.rbegin(), vars.rend());
    for (std::size_t i = 0; i < k; ++i) out.basis.eigenvalues[i] = vars[i];
  }

  out.samples = Matrix(spec.sample_count, d);
  for (std::size_t n = 0; n < spec.sample_count; ++n) {
    const Vec y = spec.region.sample(k, sample_rng);
    const Vec x = matvec(U, y);
    auto row = out.samples.row(n);
    for (std::size_t i = 0; i < d; ++i) row[i] = x[i] + out.basis.offset[i];
  }
  return out;
}

ImageDataset ImageDataset::head(std::size_t n) const {
  ImageDataset out = *this;
  if (n >= size()) return out;
  out.labels.resize(n);
  out.pixels.resize(n * image_size());
  return out;
}

std::vector<Vec> ImageDataset::as_vectors() const {
  std::vector<Vec> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.emplace_back(image(i).begin(), image(i).end());
  return out;
}

ImageDataset read_cifar_batch(const std::filesystem::path& path, std::optional<std::size_t> expected_records) {
  if (!std::filesystem::exists(path))
    throw CifarError(CifarError::Kind::missing_file, "missing CIFAR-10 batch file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CifarError(CifarError::Kind::io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecordBytes != 0 ||
      (expected_records && bytes.size() != *expected_records * kCifarRecordBytes)) {
    throw CifarError(CifarError::Kind::bad_size,
                     path.string() + ": size " + std::to_string(bytes.size()) + " bytes is not " +
                         (expected_records ? "exactly " + std::to_string(*expected_records) + " records of "
                                           : "a whole number of records of ") +
                         std::to_string(kCifarRecordBytes) + " bytes");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  ImageDataset ds;
  ds.labels.resize(n);
  ds.pixels.resize(n * 3072);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + i * kCifarRecordBytes);
    if (rec[0] >= 10)
      throw CifarError(CifarError::Kind::bad_size, path.string() + ": label out of range in record " + std::to_string(i));
    ds.labels[i] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) ds.pixels[i * 3072 + p] = static_cast<double>(rec[1 + p]) / 255.0;
  }
  return ds;
}

namespace {

void append(ImageDataset& into, const ImageDataset& from) {
  into.labels.insert(into.labels.end(), from.labels.begin(), from.labels.end());
  into.pixels.insert(into.pixels.end(), from.pixels.begin(), from.pixels.end());
}

}  // namespace

Cifar10 load_cifar10(const std::filesystem::path& dir) {
  Cifar10 out;
  for (int b = 1; b <= 5; ++b)
    append(out.train, read_cifar_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), kCifarRecordsPerBatch));
  out.test = read_cifar_batch(dir / "test_batch.bin", kCifarRecordsPerBatch);
  return out;
}

bool cifar10_available(const std::filesystem::path& dir) {
  if (dir.empty()) return false;
  for (int b = 1; b <= 5; ++b)
    if (!std::filesystem::exists(dir / ("data_batch_" + std::to_string(b) + ".bin"))) return false;
  return std::filesystem::exists(dir / "test_batch.bin");
}

ImageDataset gen_smooth_images(std::size_t count, std::uint64_t seed, std::size_t channels, std::size_t height,
                               std::size_t width) {
  ImageDataset ds;
  ds.channels = channels;
  ds.height = height;
  ds.width = width;
  ds.labels.assign(count, 0);
  ds.pixels.resize(count * ds.image_size());
  const Rng base(seed);
  constexpr int kComponents = 6;
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng = base.derive(n);
    auto img = ds.image(n);
    const double brightness = rng.uniform(0.3, 0.7);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = brightness;
    for (int m = 0; m < kComponents; ++m) {
      const double fx = static_cast<double>(rng.below(3));
      const double fy = static_cast<double>(rng.below(3));
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = rng.uniform(0.0, 0.12);
      Vec tint(channels);
      for (double& t : tint) t = rng.uniform(0.6, 1.0);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x) {
            const double arg = 2.0 * std::numbers::pi *
                                   (fx * static_cast<double>(x) / static_cast<double>(width) +
                                    fy * static_cast<double>(y) / static_cast<double>(height)) +
                               phase;
            img[(c * height + y) * width + x] += amp * tint[c] * std::cos(arg);
          }
    }
    for (double& v : img) v = std::clamp(v + 0.01 * rng.normal(), 0.0, 1.0);
  }
  return ds;
}

Matrix extract_patches(const ImageDataset& images, std::size_t ksize) {
  const std::size_t C = images.channels, H = images.height, W = images.width;
  if (H < ksize || W < ksize) throw ShapeError("extract_patches: image smaller than the window");
  if (images.pixels.size() != images.size() * images.image_size())
    throw ShapeError("extract_patches: pixel buffer does not match the image shape");
  const std::size_t oh = H - ksize + 1, ow = W - ksize + 1, dim = C * ksize * ksize;
  Matrix out(images.size() * oh * ow, dim);
  std::size_t row = 0;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto img = images.image(n);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x, ++row) {
        auto r = out.row(row);
        std::size_t i = 0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ky = 0; ky < ksize; ++ky)
            for (std::size_t kx = 0; kx < ksize; ++kx) r[i++] = img[(c * H + y + ky) * W + x + kx];
      }
  }
  return out;
}

void write_patches_csv(const Matrix& patches, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (std::size_t c = 0; c < patches.cols; ++c) out << (c ? "," : "") << "p" << c;
  out << '\n';
  for (std::size_t r = 0; r < patches.rows; ++r) {
    for (std::size_t c = 0; c < patches.cols; ++c) out << (c ? "," : "") << patches(r, c);
    out << '\n';
  }
}

Vec horizontal_flip(std::span<const double> image, const std::vector<std::size_t>& shape) {
  const std::size_t C = shape.at(0), H = shape.at(1), W = shape.at(2);
  Vec out(image.size());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = image[(c * H + y) * W + (W - 1 - x)];
  return out;
}

Vec augment(std::span<const double> image, const std::vector<std::size_t>& shape, AugmentKind kind, Rng& rng,
            const AugmentOptions& opts) {
  if (shape.size() != 3 || shape_product(shape) != image.size())
    throw ShapeError("augment: expected a C x H x W image");
  const std::size_t C = shape[0], H = shape[1], W = shape[2];
  switch (kind) {
    case AugmentKind::horizontal_flip:
      return horizontal_flip(image, shape);
    case AugmentKind::gaussian: {
      Vec out(image.begin(), image.end());
      if (opts.sigma == 0.0) return out;
      for (double& v : out) v += opts.sigma * rng.normal();
      return out;
    }
    case AugmentKind::random_crop: {
      const std::size_t pad = opts.crop_padding;
      const auto oy = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
      const auto ox = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) - static_cast<std::ptrdiff_t>(pad);
      Vec out(image.size(), 0.0);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y) + oy;
            const auto sx = static_cast<std::ptrdiff_t>(x) + ox;
            if (sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(H) && sx < static_cast<std::ptrdiff_t>(W))
              out[(c * H + y) * W + x] = image[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
          }
      return out;
    }
    case AugmentKind::rotation: {
      const double theta = rng.uniform(-opts.max_rotation_deg, opts.max_rotation_deg) * std::numbers::pi / 180.0;
      const double cs = std::cos(theta), sn = std::sin(theta);
      const double cy = (static_cast<double>(H) - 1.0) / 2.0, cx = (static_cast<double>(W) - 1.0) / 2.0;
      Vec out(image.size(), 0.0);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
          const auto sy = static_cast<std::ptrdiff_t>(std::lround(cs * dy - sn * dx + cy));
          const auto sx = static_cast<std::ptrdiff_t>(std::lround(sn * dy + cs * dx + cx));
          if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(H) || sx >= static_cast<std::ptrdiff_t>(W)) continue;
          for (std::size_t c = 0; c < C; ++c)
            out[(c * H + y) * W + x] = image[(c * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)];
        }
      return out;
    }
  }
  throw Error("augment: unknown kind");
}

}  // namespace splab
