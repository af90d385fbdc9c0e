#pragma once

// Checkpoint file: "SAANCK1\n", u32 version, u32 parameter count, then per
// parameter u16 name length, name bytes, u8 rank, rank x u32 dims, f32 data.
// Everything little-endian; parameters appear in name order.

#include <filesystem>
#include <string>
#include <string_view>

#include "saan/network.hpp"

namespace saan {

inline constexpr std::string_view kCheckpointMagic = "SAANCK1\n";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelParams<float>& params);
ModelParams<float> decode_checkpoint(std::string_view bytes);

// Throws InventoryError naming the first missing, extra, or misshapen parameter.
void validate_inventory(const ModelParams<float>& params, const NetworkConfig& config);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
// Decodes without an inventory check; parse errors carry the path.
ModelParams<float> read_checkpoint(const std::filesystem::path& path);
// Loads and validates against `config`.
ModelParams<float> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& config);

// The built-in config (standard or tiny) whose inventory matches, or the
// standard config's InventoryError when neither does.
NetworkConfig detect_config(const ModelParams<float>& params);

}  // namespace saan
