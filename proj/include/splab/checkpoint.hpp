#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "splab/network.hpp"

namespace splab {

struct TrainingMetadata {
  std::uint32_t epochs = 0;
  std::string regime;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  Network net;
  TrainingMetadata meta;
};

class CheckpointError : public Error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, malformed };
  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (all integers and floats little-endian):
///   "SPLB" | u32 version | u32 input rank | u32 dims[rank] | u8 biases
///   | u32 layer count | per layer: u8 kind, u32 in_ch, in_h, in_w, out_ch, ksize
///   | f64 parameters (per layer: weights, then biases)
///   | u32 epochs | u32 regime length | regime bytes | u64 seed
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace splab
