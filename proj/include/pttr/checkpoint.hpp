#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pttr/nn.hpp"

namespace pttr {

// Checkpoint layout (all integers little-endian):
//   magic "PTTRCKPT" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes | u32 rows | u32 cols
//   payload: every entry's values as float32, row-major, in manifest order
//   u32 CRC-32 of everything above
inline constexpr char kCheckpointMagic[8] = {'P', 'T', 'T', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ManifestEntry {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  bool operator==(const ManifestEntry&) const = default;
};

struct CheckpointData {
  std::vector<ManifestEntry> manifest;
  std::vector<std::vector<float>> values;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParameterList<T>& params);

/// Throws std::runtime_error on bad magic, version, truncation or CRC mismatch.
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Loads values into `params`; the manifest must match names and shapes exactly.
template <typename T>
void apply_checkpoint(const CheckpointData& data, const ParameterList<T>& params);

template <typename T>
void save_checkpoint(const std::string& path, const ParameterList<T>& params);

template <typename T>
void load_checkpoint(const std::string& path, const ParameterList<T>& params);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace pttr
