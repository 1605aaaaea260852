#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvb/geometry.hpp"

namespace mvb {

enum class Domain { kBhs, kCheckpoint };
enum class Material { kHard, kSoft, kPaperboard, kOthers };
enum class SplitTag { kTrain, kTest };

std::string_view to_string(Domain d);
std::string_view to_string(Material m);
std::string_view to_string(SplitTag s);
Domain parse_domain(std::string_view text);
Material parse_material(std::string_view text);
SplitTag parse_split_tag(std::string_view text);

/// Number of camera views per capture stage: three at the conveyor portal,
/// four at the checkpoint gate.
constexpr int max_views(Domain d) { return d == Domain::kBhs ? 3 : 4; }

inline constexpr std::string_view kManifestSchemaVersion = "1.0";

struct ImageRecord {
  std::string image_id;
  std::string identity_id;
  Domain domain = Domain::kBhs;
  int view_index = 1;
  std::string image_path;  // relative to the dataset image root
  int width = 0;
  int height = 0;
  Polygon mask_polygon;
  BBox bbox;
  Material material = Material::kHard;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  /// identity_id -> image_ids, in record order.
  std::map<std::string, std::vector<std::string>> identities;
  std::optional<SplitTag> split_tag;
  std::string schema_version{kManifestSchemaVersion};
  /// Directory holding the image files, relative to the manifest file.
  std::string image_root = ".";

  /// Rebuilds `identities` from `records`.
  void reindex();
  std::size_t identity_count() const { return identities.size(); }
  const ImageRecord* find(std::string_view image_id) const;
  std::map<std::string, const ImageRecord*> by_id() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedManifest {
  DatasetManifest manifest;
  /// Resolved directory the record image paths are relative to.
  std::filesystem::path image_dir;
  /// Non-fatal problems, e.g. image files that do not exist.
  std::vector<std::string> warnings;
};

/// Reads and validates a manifest; throws ManifestError naming the first
/// offending record or identity.
LoadedManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view text);

struct InvariantCheck {
  std::string name;
  bool passed = true;
  std::vector<std::string> offending_ids;
};

struct DomainStatistics {
  std::size_t identities = 0;
  std::size_t bhs_images = 0;
  std::size_t checkpoint_images = 0;
  double avg_bhs_views = 0.0;
  double avg_checkpoint_views = 0.0;
  std::map<Material, std::size_t> identities_per_material;
};

struct ValidationReport {
  std::vector<InvariantCheck> checks;
  DomainStatistics statistics;

  bool ok() const;
  const InvariantCheck* first_failure() const;
  /// Two-row table in the layout of the annotation statistics summary.
  std::string render_statistics() const;
};

ValidationReport validate_manifest(const DatasetManifest& manifest);

/// Identity-disjoint split; the test side gets exactly n_test identities,
/// drawn uniformly at random under `seed`.
std::pair<DatasetManifest, DatasetManifest> split_train_test(
    const DatasetManifest& manifest, std::size_t n_test, std::uint64_t seed);

/// Keeps only the records of the listed identities.
DatasetManifest subset_identities(const DatasetManifest& manifest,
                                  const std::vector<std::string>& identity_ids);

}  // namespace mvb
