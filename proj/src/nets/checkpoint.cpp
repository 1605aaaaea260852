#include "mvb/nets/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mvb/config.hpp"

namespace mvb::nets {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian hosts");

namespace {

constexpr char kMagic[8] = {'M', 'V', 'B', 'C', 'K', 'P', 'T', '\0'};

ParamScope parse_scope(const std::string& s) {
  if (s == "shared") return ParamScope::kShared;
  if (s == "probe") return ParamScope::kProbe;
  if (s == "gallery") return ParamScope::kGallery;
  throw CheckpointError("unknown parameter scope '" + s + "'");
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}

nlohmann::ordered_json read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError("truncated checkpoint header");
  try {
    return nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const SiameseNetwork& network, const std::filesystem::path& path,
                     const nlohmann::ordered_json& metadata) {
  auto entries = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  const auto params = network.state().entries();
  for (const auto& e : params) {
    entries.push_back({{"name", e.name},
                       {"scope", to_string(e.scope)},
                       {"shape", e.storage->shape},
                       {"offset", offset},
                       {"count", e.storage->size()}});
    offset += e.storage->size();
  }
  const nlohmann::ordered_json header{{"network", to_json(network.config())},
                                      {"metadata", metadata},
                                      {"total_values", offset},
                                      {"entries", entries}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : params) {
    out.write(reinterpret_cast<const char*>(e.storage->value.data()),
              static_cast<std::streamsize>(e.storage->size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

nlohmann::ordered_json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  return read_header(in, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  const auto header = read_header(in, path);
  NetworkConfig config;
  try {
    config = network_config_from_json(header.at("network"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("bad network config in checkpoint: ") + e.what());
  }
  LoadedCheckpoint loaded{SiameseNetwork(config, 0), header.value("metadata", nlohmann::ordered_json::object())};

  const auto total = header.at("total_values").get<std::uint64_t>();
  std::vector<float> values(total);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (!in) throw CheckpointError("truncated checkpoint data");

  std::size_t matched = 0;
  for (const auto& e : header.at("entries")) {
    const auto name = e.at("name").get<std::string>();
    Parameter* p = loaded.network.state().find(name, parse_scope(e.at("scope").get<std::string>()));
    if (p == nullptr) throw CheckpointError("checkpoint tensor '" + name + "' has no place in the network");
    if (e.at("shape").get<std::vector<int>>() != p->shape) {
      throw CheckpointError("shape mismatch for '" + name + "'");
    }
    const auto off = e.at("offset").get<std::uint64_t>();
    const auto count = e.at("count").get<std::uint64_t>();
    if (count != p->size() || off + count > total) throw CheckpointError("bad extent for '" + name + "'");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), count, p->value.begin());
    ++matched;
  }
  if (matched != loaded.network.state().entries().size()) {
    throw CheckpointError("checkpoint is missing tensors for this network");
  }
  return loaded;
}

}  // namespace mvb::nets
