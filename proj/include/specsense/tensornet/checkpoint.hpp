#pragma once

// Checkpoint file: "SPCK" container framing with a JSON manifest
//   {"layers": [...], "tensors": [{"name", "shape"}...], "meta": {...}}
// followed by every tensor in manifest order as little-endian f32.

#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "specsense/tensornet/network.hpp"

namespace specsense::nn {

inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

template <typename T>
struct LoadedCheckpoint {
  Network<T> network;
  nlohmann::json meta;
};

template <typename T>
void save_checkpoint(std::ostream& out, const Network<T>& network, const nlohmann::json& meta);
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Network<T>& network, const nlohmann::json& meta);

template <typename T>
[[nodiscard]] LoadedCheckpoint<T> load_checkpoint(std::istream& in);
template <typename T>
[[nodiscard]] LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace specsense::nn
