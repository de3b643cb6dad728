#include "splab/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace splab {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n)
      throw CheckpointError(CheckpointError::Kind::truncated,
                            "checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'S', 'P', 'L', 'B'};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Network& net = ckpt.net;
  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(net.input_shape.size()));
  for (auto d : net.input_shape) w.u32(static_cast<std::uint32_t>(d));
  w.u8(net.biases ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& L : net.layers) {
    w.u8(static_cast<std::uint8_t>(L.kind));
    w.u32(static_cast<std::uint32_t>(L.in_ch));
    w.u32(static_cast<std::uint32_t>(L.in_h));
    w.u32(static_cast<std::uint32_t>(L.in_w));
    w.u32(static_cast<std::uint32_t>(L.out_ch));
    w.u32(static_cast<std::uint32_t>(L.ksize));
  }
  for (const auto& L : net.layers) {
    for (double v : L.weight) w.f64(v);
    for (double v : L.bias) w.f64(v);
  }
  w.u32(ckpt.meta.epochs);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.regime.size()));
  w.bytes(ckpt.meta.regime);
  w.u64(ckpt.meta.seed);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4)
    throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated before magic");
  if (bytes.compare(0, 4, std::string(kMagic, 4)) != 0)
    throw CheckpointError(CheckpointError::Kind::bad_magic, "bad magic: not an SPLB checkpoint");
  Reader r(bytes);
  r.bytes(4);
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  Network& net = ckpt.net;
  const auto rank = r.u32();
  if (rank == 0 || rank > 8) throw CheckpointError(CheckpointError::Kind::malformed, "bad input rank");
  for (std::uint32_t i = 0; i < rank; ++i) net.input_shape.push_back(r.u32());
  net.biases = r.u8() != 0;
  const auto count = r.u32();
  if (count == 0 || count > 1024) throw CheckpointError(CheckpointError::Kind::malformed, "bad layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer L;
    const auto kind = r.u8();
    if (kind > 1) throw CheckpointError(CheckpointError::Kind::malformed, "unknown layer type tag");
    L.kind = static_cast<LayerKind>(kind);
    L.in_ch = r.u32();
    L.in_h = r.u32();
    L.in_w = r.u32();
    L.out_ch = r.u32();
    L.ksize = r.u32();
    net.layers.push_back(L);
  }
  for (auto& L : net.layers) {
    const std::size_t n = L.out_ch * L.fan_in();
    if (n > (std::size_t{1} << 32)) throw CheckpointError(CheckpointError::Kind::malformed, "layer too large");
    L.weight.resize(n);
    L.bias.resize(L.out_ch);
    for (double& v : L.weight) v = r.f64();
    for (double& v : L.bias) v = r.f64();
  }
  ckpt.meta.epochs = r.u32();
  ckpt.meta.regime = r.bytes(r.u32());
  ckpt.meta.seed = r.u64();
  if (!r.at_end()) throw CheckpointError(CheckpointError::Kind::malformed, "trailing bytes after checkpoint");
  try {
    net.validate();
  } catch (const ShapeError& e) {
    throw CheckpointError(CheckpointError::Kind::malformed, std::string("inconsistent architecture: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace splab
