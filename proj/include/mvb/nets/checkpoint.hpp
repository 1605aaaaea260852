#pragma once

#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "mvb/nets/network.hpp"

namespace mvb::nets {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic "MVBCKPT\0", u32 version, u64 header length, a JSON
/// header (network config, metadata, and one entry per tensor with name,
/// scope shared/probe/gallery, shape, element offset), then little-endian
/// float32 values.
void save_checkpoint(const SiameseNetwork& network, const std::filesystem::path& path,
                     const nlohmann::ordered_json& metadata = nlohmann::ordered_json::object());

struct LoadedCheckpoint {
  SiameseNetwork network;
  nlohmann::ordered_json metadata;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// The JSON header only, without reading tensor data.
nlohmann::ordered_json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace mvb::nets
