#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cadsketch/optim.hpp"

namespace cadsketch::nets {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor value;
};

// Layout (little-endian): "PCSO", u32 version, u32 count, then per parameter
// u32 name length, name bytes, u32 rank, u32 dims[rank], f32 payload.
std::string encode_checkpoint(const ad::ParameterStore& store);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ad::ParameterStore& store, const std::filesystem::path& path);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into an existing store. Names and order must
/// match (CheckpointMismatch); shapes must match (ShapeMismatch naming the
/// parameter).
void load_into(ad::ParameterStore& store, const std::vector<NamedTensor>& tensors);
void load_into(ad::ParameterStore& store, const std::filesystem::path& path);

}  // namespace cadsketch::nets
