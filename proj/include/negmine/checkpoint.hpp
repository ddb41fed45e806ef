#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <vector>

#include "negmine/adam.hpp"
#include "negmine/network.hpp"

namespace negmine {

// Checkpoint container (all integers and floats little-endian):
//
//   "NMCK"                      magic, 4 bytes
//   u8  version                 currently 1
//   u8  flags                   bit 0: optimizer state present
//   i32 input_size, depth, base_channels
//   u32 inception level count, then i32 per level
//   u32 layer count, then per layer:
//       u16 id length, id bytes, i32 out, in, k, k, u32 bias length
//   f64 payload: per layer weights then bias, in header order
//   optional: u64 t, f64 lr, beta1, beta2, eps, then m payload, v payload
//   u32 CRC-32 of every preceding byte

inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(std::size_t offset, const std::string& detail);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct Checkpoint {
  ParameterSet params;
  std::optional<AdamState> optimizer;
};

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params,
                                            const AdamState* optimizer = nullptr);
/// Verifies magic, version, checksum, and that the layers match the plan
/// derived from the stored NetworkSpec.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws SpecError listing both id sets when `params` does not have exactly
/// the layers `spec` demands.
void require_layers_match(const ParameterSet& params, const NetworkSpec& spec);

}  // namespace negmine
