#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "mghl/policy_nets.hpp"

namespace mghl {

// File layout, all integers little-endian:
//   "MGHL"  u16 version  u32 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rank, u64 dims[rank], f64 values
//   u32 crc32 of everything before it
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class VersionMismatchError : public CheckpointError {
 public:
  VersionMismatchError(std::uint16_t found)
      : CheckpointError("checkpoint version " + std::to_string(found) + " not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")"),
        found_(found) {}
  std::uint16_t found() const { return found_; }

 private:
  std::uint16_t found_;
};

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace mghl
