#include "mvb/data_model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mvb/rng.hpp"

namespace mvb {

using json = nlohmann::ordered_json;

std::string_view to_string(Domain d) {
  return d == Domain::kBhs ? "BHS" : "CHECKPOINT";
}

std::string_view to_string(Material m) {
  switch (m) {
    case Material::kHard: return "HARD";
    case Material::kSoft: return "SOFT";
    case Material::kPaperboard: return "PAPERBOARD";
    case Material::kOthers: return "OTHERS";
  }
  return "OTHERS";
}

std::string_view to_string(SplitTag s) {
  return s == SplitTag::kTrain ? "TRAIN" : "TEST";
}

Domain parse_domain(std::string_view text) {
  if (text == "BHS") return Domain::kBhs;
  if (text == "CHECKPOINT") return Domain::kCheckpoint;
  throw ManifestError("unknown domain '" + std::string(text) + "'");
}

Material parse_material(std::string_view text) {
  if (text == "HARD") return Material::kHard;
  if (text == "SOFT") return Material::kSoft;
  if (text == "PAPERBOARD") return Material::kPaperboard;
  if (text == "OTHERS") return Material::kOthers;
  throw ManifestError("unknown material '" + std::string(text) + "'");
}

SplitTag parse_split_tag(std::string_view text) {
  if (text == "TRAIN") return SplitTag::kTrain;
  if (text == "TEST") return SplitTag::kTest;
  throw ManifestError("unknown split tag '" + std::string(text) + "'");
}

void DatasetManifest::reindex() {
  identities.clear();
  for (const auto& r : records) identities[r.identity_id].push_back(r.image_id);
}

const ImageRecord* DatasetManifest::find(std::string_view image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return &r;
  }
  return nullptr;
}

std::map<std::string, const ImageRecord*> DatasetManifest::by_id() const {
  std::map<std::string, const ImageRecord*> out;
  for (const auto& r : records) out.emplace(r.image_id, &r);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: one JSON header line followed by one JSON object per record.

namespace {

constexpr std::string_view kFormatTag = "mvb-manifest";

json record_to_json(const ImageRecord& r) {
  json mask = json::array();
  for (const Point& p : r.mask_polygon) mask.push_back({p.x, p.y});
  return json{{"image_id", r.image_id},
              {"identity_id", r.identity_id},
              {"domain", to_string(r.domain)},
              {"view", r.view_index},
              {"path", r.image_path},
              {"width", r.width},
              {"height", r.height},
              {"mask", std::move(mask)},
              {"bbox", {r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max}},
              {"material", to_string(r.material)}};
}

ImageRecord record_from_json(const json& j) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.identity_id = j.at("identity_id").get<std::string>();
  r.domain = parse_domain(j.at("domain").get<std::string>());
  r.view_index = j.at("view").get<int>();
  r.image_path = j.at("path").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  for (const auto& v : j.at("mask")) {
    if (!v.is_array() || v.size() != 2) throw ManifestError("mask vertex must be [x, y]");
    r.mask_polygon.push_back({v[0].get<int>(), v[1].get<int>()});
  }
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw ManifestError("bbox must have 4 entries");
  r.bbox = {b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  r.material = parse_material(j.at("material").get<std::string>());
  return r;
}

}  // namespace

std::string serialize_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  json header{{"format", kFormatTag},
              {"schema_version", manifest.schema_version},
              {"split", manifest.split_tag ? json(to_string(*manifest.split_tag))
                                           : json(nullptr)},
              {"image_root", manifest.image_root},
              {"records", manifest.records.size()}};
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
  return out.str();
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t declared = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != kFormatTag) {
          throw ManifestError("missing manifest header");
        }
        m.schema_version = j.at("schema_version").get<std::string>();
        if (m.schema_version != kManifestSchemaVersion) {
          throw ManifestError("unsupported schema_version '" + m.schema_version + "'");
        }
        const auto& split = j.at("split");
        if (!split.is_null()) m.split_tag = parse_split_tag(split.get<std::string>());
        m.image_root = j.value("image_root", ".");
        declared = j.value("records", std::size_t{0});
        have_header = true;
        continue;
      }
      m.records.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ManifestError& e) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ManifestError("empty manifest");
  if (declared != m.records.size()) {
    throw ManifestError("header declares " + std::to_string(declared) +
                        " records, found " + std::to_string(m.records.size()));
  }
  m.reindex();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError("cannot write manifest: " + path.string());
  out << serialize_manifest(manifest);
}

LoadedManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot open manifest: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();

  LoadedManifest loaded;
  loaded.manifest = parse_manifest(buffer.str());
  const auto report = validate_manifest(loaded.manifest);
  if (const auto* failure = report.first_failure()) {
    std::string msg = "manifest invariant '" + failure->name + "' violated";
    if (!failure->offending_ids.empty()) msg += " by '" + failure->offending_ids.front() + "'";
    throw ManifestError(msg);
  }
  loaded.image_dir = (path.parent_path() / loaded.manifest.image_root).lexically_normal();
  for (const auto& r : loaded.manifest.records) {
    if (!std::filesystem::exists(loaded.image_dir / r.image_path)) {
      loaded.warnings.push_back("missing image file for " + r.image_id + ": " + r.image_path);
    }
  }
  return loaded;
}

// ---------------------------------------------------------------------------

bool ValidationReport::ok() const { return first_failure() == nullptr; }

const InvariantCheck* ValidationReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return &c;
  }
  return nullptr;
}

std::string ValidationReport::render_statistics() const {
  const auto& s = statistics;
  char buf[256];
  std::string out = "domain       #images  avg views/identity\n";
  std::snprintf(buf, sizeof buf, "BHS          %7zu  %.2f\n", s.bhs_images, s.avg_bhs_views);
  out += buf;
  std::snprintf(buf, sizeof buf, "Checkpoint   %7zu  %.2f\n", s.checkpoint_images,
                s.avg_checkpoint_views);
  out += buf;
  std::snprintf(buf, sizeof buf, "Overall      %7zu  %.2f\n", s.bhs_images + s.checkpoint_images,
                s.avg_bhs_views + s.avg_checkpoint_views);
  out += buf;
  return out;
}

ValidationReport validate_manifest(const DatasetManifest& manifest) {
  ValidationReport report;
  report.checks.reserve(8);  // references below must stay valid
  auto check = [&](std::string name) -> InvariantCheck& {
    report.checks.push_back({std::move(name), true, {}});
    return report.checks.back();
  };
  auto fail = [](InvariantCheck& c, const std::string& id) {
    c.passed = false;
    c.offending_ids.push_back(id);
  };

  auto& unique_ids = check("unique_image_ids");
  auto& views = check("view_index_in_range");
  auto& polygon_ok = check("mask_polygon_valid");
  auto& bbox_ordered = check("bbox_ordered");
  auto& bbox_matches = check("bbox_is_min_enclosing_rect");
  auto& in_bounds = check("polygon_within_image");
  auto& consistent = check("identities_match_records");
  auto& both_domains = check("identity_in_both_domains");

  std::set<std::string> seen;
  std::map<std::string, std::pair<int, int>> per_identity;  // (bhs, checkpoint)
  std::map<std::string, Material> identity_material;
  for (const auto& r : manifest.records) {
    if (!seen.insert(r.image_id).second) fail(unique_ids, r.image_id);
    if (r.view_index < 1 || r.view_index > max_views(r.domain)) fail(views, r.image_id);
    const BBox& b = r.bbox;
    if (b.x_min >= b.x_max || b.y_min >= b.y_max) fail(bbox_ordered, r.image_id);
    try {
      if (bbox_from_polygon(r.mask_polygon) != r.bbox) fail(bbox_matches, r.image_id);
    } catch (const GeometryError&) {
      fail(polygon_ok, r.image_id);
    }
    if (!polygon_within(r.mask_polygon, r.width, r.height)) fail(in_bounds, r.image_id);
    auto& counts = per_identity[r.identity_id];
    (r.domain == Domain::kBhs ? counts.first : counts.second) += 1;
    identity_material.emplace(r.identity_id, r.material);
  }

  std::map<std::string, std::vector<std::string>> expected;
  for (const auto& r : manifest.records) expected[r.identity_id].push_back(r.image_id);
  if (expected != manifest.identities) {
    for (const auto& [id, imgs] : manifest.identities) {
      auto it = expected.find(id);
      if (it == expected.end() || it->second != imgs) fail(consistent, id);
    }
    for (const auto& [id, imgs] : expected) {
      if (!manifest.identities.contains(id)) fail(consistent, id);
    }
  }
  for (const auto& [id, counts] : per_identity) {
    if (counts.first == 0 || counts.second == 0) fail(both_domains, id);
  }

  auto& s = report.statistics;
  s.identities = per_identity.size();
  for (const auto& [id, counts] : per_identity) {
    s.bhs_images += counts.first;
    s.checkpoint_images += counts.second;
  }
  if (s.identities > 0) {
    s.avg_bhs_views = static_cast<double>(s.bhs_images) / s.identities;
    s.avg_checkpoint_views = static_cast<double>(s.checkpoint_images) / s.identities;
  }
  for (const auto& [id, material] : identity_material) s.identities_per_material[material] += 1;
  return report;
}

// ---------------------------------------------------------------------------

DatasetManifest subset_identities(const DatasetManifest& manifest,
                                  const std::vector<std::string>& identity_ids) {
  const std::set<std::string> keep(identity_ids.begin(), identity_ids.end());
  DatasetManifest out;
  out.schema_version = manifest.schema_version;
  out.image_root = manifest.image_root;
  out.split_tag = manifest.split_tag;
  for (const auto& r : manifest.records) {
    if (keep.contains(r.identity_id)) out.records.push_back(r);
  }
  out.reindex();
  return out;
}

std::pair<DatasetManifest, DatasetManifest> split_train_test(
    const DatasetManifest& manifest, std::size_t n_test, std::uint64_t seed) {
  const std::size_t n = manifest.identities.size();
  if (n_test >= n && !(n_test == 0 && n == 0)) {
    throw ManifestError("n_test (" + std::to_string(n_test) +
                        ") must be smaller than the identity count (" + std::to_string(n) + ")");
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& [id, imgs] : manifest.identities) ids.push_back(id);
  auto rng = Rng::substream(seed, "data_model.split");
  rng.shuffle(ids.begin(), ids.end());

  std::vector<std::string> test_ids(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::string> train_ids(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
  auto train = subset_identities(manifest, train_ids);
  auto test = subset_identities(manifest, test_ids);
  train.split_tag = SplitTag::kTrain;
  test.split_tag = SplitTag::kTest;
  return {std::move(train), std::move(test)};
}

}  // namespace mvb
