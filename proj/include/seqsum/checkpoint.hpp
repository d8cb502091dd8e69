#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "seqsum/tensor.hpp"

namespace seqsum {

// SHA-256 as lowercase hex.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

struct NamedTensor {
  std::string name;
  bool trainable = true;
  Matrix value;
};

// Versioned binary container:
//   "SEQSUMCK" | u32 version | u64 len + config JSON | u64 count |
//   per tensor: u32 len + name | u8 trainable | u32 rank (2) | u64 rows | u64 cols |
//               rows*cols little-endian f64, row-major |
//   32-byte SHA-256 of everything before it.
struct CheckpointData {
  std::string config_json;
  std::vector<NamedTensor> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const CheckpointData& data);
// Throws "checksum mismatch" when the trailing digest does not match.
CheckpointData decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::filesystem::path& path);

}  // namespace seqsum
