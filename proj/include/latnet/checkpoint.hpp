#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "latnet/network.hpp"

namespace latnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Network net;
    nlohmann::json provenance;  // technique, seed, config hash, free-form
};

// Single-file container: magic "LNCP", format version, architecture JSON
// (layer list + provenance), little-endian float64 parameter payload, trailing
// crc32 over everything before it.
void save_checkpoint(const Network& net, const nlohmann::json& provenance,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Architecture as JSON (layer hyperparameters and shapes, no weights).
nlohmann::json architecture_json(const Network& net);
Network network_from_architecture(const nlohmann::json& arch);

// FNV-1a over the parameter payload bytes; stable across platforms.
std::uint64_t model_hash(const Network& net);
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace latnet
