#pragma once

// On-disk network checkpoints:
//   "ORLB" | u32 version (=1) | u32 header length | UTF-8 JSON header |
//   per layer: weights (row-major) then biases, little-endian float32.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "oodrl/nn.hpp"

namespace oodrl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nn::Network network;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();  // training metadata
};

nlohmann::json spec_to_json(const nn::NetworkSpec& spec);
nn::NetworkSpec spec_from_json(const nlohmann::json& j);

// Rounds every parameter through float32 so the in-memory checkpoint is
// exactly what a save/load cycle would produce.
Checkpoint make_checkpoint(const nn::Network& net, std::uint64_t seed,
                           nlohmann::json metadata = nlohmann::json::object());

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace oodrl
