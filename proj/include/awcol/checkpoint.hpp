#pragma once

#include <cstdint>
#include <filesystem>

#include "awcol/protonet.hpp"

namespace awcol {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// On-disk model snapshot.
///
/// Layout (little-endian): "AWCL", u32 version, u32 model_id, u64 seed,
/// u64 config_hash, u32 layer count, (u32 out, u32 in) per layer, f64
/// parameters (weights row-major then bias, layer by layer), u64 Adam step,
/// f64 lr/beta1/beta2/epsilon, f64 first and second moments in parameter
/// order, and a trailing u64 FNV-1a checksum of every preceding byte.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    ProtoModel model;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

}  // namespace awcol
