// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ddpt/params.hpp"

namespace ddpt {

// On-disk layout, all integers little-endian:
//   "DDPTCKPT" | u8 version | u64 header length | JSON header |
//   tensor blobs (raw little-endian scalars) | SHA-256 of everything before it
// The header holds the config snapshot and, per tensor, its name, shape,
// scalar width, frozen flag, and blob offset/length.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  ParamSet params;
};

std::string encode_checkpoint(const nlohmann::json& config, const ParamSet& params);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const ParamSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
// Digest of the serialized parameters (empty config snapshot).
std::string params_digest(const ParamSet& params);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace ddpt
