#include "mvb/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mvb/rng.hpp"

namespace mvb {

std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::kDistance ? "DISTANCE" : "PROBABILITY";
}

std::string_view to_string(PairLabel label) {
  return label == PairLabel::kPositive ? "POSITIVE" : "NEGATIVE";
}

std::string_view to_string(PairSource source) {
  return source == PairSource::kBase ? "BASE" : "MINED";
}

std::string_view to_string(PairingMode mode) {
  return mode == PairingMode::kCrossDomain ? "cross_domain" : "all";
}

PairingMode parse_pairing_mode(std::string_view text) {
  if (text == "cross_domain" || text == "CROSS_DOMAIN" || text == "cross") return PairingMode::kCrossDomain;
  if (text == "all" || text == "ALL") return PairingMode::kAll;
  throw PairError("unknown pairing mode '" + std::string(text) + "'");
}

std::size_t PairSet::positives() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const PairSample& s) {
    return s.label == PairLabel::kPositive;
  }));
}

std::size_t PairSet::negatives() const { return samples.size() - positives(); }

double PairSet::negatives_per_positive() const {
  const auto p = positives();
  return p == 0 ? 0.0 : static_cast<double>(negatives()) / static_cast<double>(p);
}

namespace {

std::string pair_key(std::string_view probe, std::string_view gallery) {
  std::string key;
  key.reserve(probe.size() + gallery.size() + 1);
  key.append(probe);
  key.push_back('\t');
  key.append(gallery);
  return key;
}

// Checkpoint images take the probe role; otherwise the first argument does.
PairSample make_pair(const ImageRecord& a, const ImageRecord& b, PairLabel label) {
  const bool swap = a.domain == Domain::kBhs && b.domain == Domain::kCheckpoint;
  const ImageRecord& probe = swap ? b : a;
  const ImageRecord& gallery = swap ? a : b;
  return {probe.image_id, gallery.image_id, label, PairSource::kBase};
}

std::unordered_set<std::string> key_set(const PairSet& set) {
  std::unordered_set<std::string> keys;
  for (const auto& s : set.samples) keys.insert(pair_key(s.probe_image_id, s.gallery_image_id));
  return keys;
}

struct CandidateSpace {
  std::vector<const ImageRecord*> left;
  std::vector<const ImageRecord*> right;
  bool unordered = false;  // left == right, only i < j counted

  std::size_t raw_size() const {
    return unordered ? left.size() * (left.size() - (left.empty() ? 0 : 1)) / 2
                     : left.size() * right.size();
  }
};

CandidateSpace candidate_space(const DatasetManifest& m, PairingMode mode) {
  CandidateSpace space;
  if (mode == PairingMode::kCrossDomain) {
    for (const auto& r : m.records) {
      (r.domain == Domain::kCheckpoint ? space.left : space.right).push_back(&r);
    }
  } else {
    for (const auto& r : m.records) space.left.push_back(&r);
    space.unordered = true;
  }
  return space;
}

}  // namespace

bool PairSet::has_duplicates() const {
  std::unordered_set<std::string> keys;
  for (const auto& s : samples) {
    if (!keys.insert(pair_key(s.probe_image_id, s.gallery_image_id)).second) return true;
  }
  return false;
}

std::vector<PairSample> build_positive_pairs(const DatasetManifest& train, PairingMode mode) {
  const auto index = train.by_id();
  std::vector<PairSample> out;
  for (const auto& [identity, image_ids] : train.identities) {
    std::vector<const ImageRecord*> records;
    for (const auto& id : image_ids) records.push_back(index.at(id));
    if (mode == PairingMode::kCrossDomain) {
      for (const auto* probe : records) {
        if (probe->domain != Domain::kCheckpoint) continue;
        for (const auto* gallery : records) {
          if (gallery->domain != Domain::kBhs) continue;
          out.push_back({probe->image_id, gallery->image_id, PairLabel::kPositive, PairSource::kBase});
        }
      }
    } else {
      for (std::size_t i = 0; i < records.size(); ++i) {
        for (std::size_t j = i + 1; j < records.size(); ++j) {
          out.push_back(make_pair(*records[i], *records[j], PairLabel::kPositive));
        }
      }
    }
  }
  return out;
}

std::size_t count_negative_candidates(const DatasetManifest& train, PairingMode mode) {
  const CandidateSpace space = candidate_space(train, mode);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_identity;
  for (const auto* r : space.left) per_identity[r->identity_id].first += 1;
  for (const auto* r : space.right) per_identity[r->identity_id].second += 1;
  std::size_t same = 0;
  for (const auto& [id, c] : per_identity) {
    same += space.unordered ? c.first * (c.first - (c.first ? 1 : 0)) / 2 : c.first * c.second;
  }
  return space.raw_size() - same;
}

std::vector<PairSample> sample_negative_pairs(const DatasetManifest& train, std::size_t count,
                                              const PairSet& exclude, std::uint64_t seed,
                                              PairingMode mode) {
  if (count == 0) return {};
  const CandidateSpace space = candidate_space(train, mode);
  const auto excluded = key_set(exclude);

  auto is_excluded = [&](const PairSample& s) {
    return excluded.contains(pair_key(s.probe_image_id, s.gallery_image_id)) ||
           (space.unordered && excluded.contains(pair_key(s.gallery_image_id, s.probe_image_id)));
  };

  const std::size_t candidates = count_negative_candidates(train, mode);
  std::size_t excluded_candidates = 0;
  {
    const auto index = train.by_id();
    for (const auto& s : exclude.samples) {
      auto a = index.find(s.probe_image_id);
      auto b = index.find(s.gallery_image_id);
      if (a == index.end() || b == index.end()) continue;
      if (a->second->identity_id == b->second->identity_id) continue;
      if (mode == PairingMode::kCrossDomain &&
          !(a->second->domain == Domain::kCheckpoint && b->second->domain == Domain::kBhs)) {
        continue;
      }
      ++excluded_candidates;
    }
  }
  const std::size_t available = candidates - std::min(candidates, excluded_candidates);
  if (count > available) {
    throw PairError("requested " + std::to_string(count) + " negative pairs but only " +
                    std::to_string(available) + " distinct ones exist");
  }

  auto rng = Rng::substream(seed, "pairs.negatives");
  std::vector<PairSample> out;
  out.reserve(count);

  auto pair_at = [&](std::size_t i, std::size_t j) {
    return make_pair(*space.left[i], *space.right[j], PairLabel::kNegative);
  };
  const auto& right = space.unordered ? space.left : space.right;

  if (count * 3 < available) {
    // Sparse request: rejection sampling over the full product space.
    std::unordered_set<std::string> chosen;
    while (out.size() < count) {
      std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(space.left.size()) - 1));
      std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(right.size()) - 1));
      if (space.unordered) {
        if (i == j) continue;
        if (i > j) std::swap(i, j);
      }
      if (space.left[i]->identity_id == right[j]->identity_id) continue;
      PairSample s = space.unordered ? make_pair(*space.left[i], *space.left[j], PairLabel::kNegative)
                                     : pair_at(i, j);
      if (is_excluded(s)) continue;
      if (!chosen.insert(pair_key(s.probe_image_id, s.gallery_image_id)).second) continue;
      out.push_back(std::move(s));
    }
    return out;
  }

  // Dense request: enumerate every valid pair, then a partial shuffle.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> valid;
  valid.reserve(available);
  for (std::size_t i = 0; i < space.left.size(); ++i) {
    for (std::size_t j = space.unordered ? i + 1 : 0; j < right.size(); ++j) {
      if (space.left[i]->identity_id == right[j]->identity_id) continue;
      PairSample s = space.unordered ? make_pair(*space.left[i], *space.left[j], PairLabel::kNegative)
                                     : pair_at(i, j);
      if (is_excluded(s)) continue;
      valid.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
    }
  }
  for (std::size_t k = 0; k < count; ++k) {
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(k), static_cast<std::int64_t>(valid.size()) - 1));
    std::swap(valid[k], valid[pick]);
    const auto [i, j] = valid[k];
    out.push_back(space.unordered ? make_pair(*space.left[i], *space.left[j], PairLabel::kNegative)
                                  : pair_at(i, j));
  }
  return out;
}

PairSet build_base_pair_set(const DatasetManifest& train, PairingMode mode, std::uint64_t seed) {
  PairSet set;
  set.samples = build_positive_pairs(train, mode);
  const std::size_t positives = set.samples.size();
  auto negatives = sample_negative_pairs(train, positives, set, seed, mode);
  set.samples.insert(set.samples.end(), negatives.begin(), negatives.end());
  set.provenance = {{"kind", "base"},
                    {"mode", to_string(mode)},
                    {"seed", seed},
                    {"identities", train.identity_count()},
                    {"positives", positives},
                    {"negatives", negatives.size()}};
  return set;
}

MiningResult mine_hard_negatives(SimilarityModel& model, const DatasetManifest& train,
                                 const MiningConfig& config, const PairSet& base,
                                 std::uint64_t seed) {
  MiningResult result;
  std::vector<std::string> ids;
  for (const auto& [id, imgs] : train.identities) ids.push_back(id);
  auto rng = Rng::substream(seed, "pairs.mining");
  rng.shuffle(ids.begin(), ids.end());
  const auto n = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(std::max(0, config.n_identities)));
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  result.sampled_identities = ids;

  const std::set<std::string> sampled(ids.begin(), ids.end());
  std::vector<const ImageRecord*> probes, gallery;
  for (const auto& r : train.records) {
    if (!sampled.contains(r.identity_id)) continue;
    (r.domain == Domain::kCheckpoint ? probes : gallery).push_back(&r);
  }

  struct Candidate {
    double probability;
    const ImageRecord* probe;
    const ImageRecord* gallery;
  };
  std::vector<Candidate> candidates;
  const auto existing = key_set(base);
  if (!probes.empty() && !gallery.empty()) {
    const auto scores = model.score(probes, gallery);
    for (std::size_t p = 0; p < probes.size(); ++p) {
      for (std::size_t g = 0; g < gallery.size(); ++g) {
        if (probes[p]->identity_id == gallery[g]->identity_id) continue;
        ++result.candidates_scored;
        const double prob = model.same_probability(scores[p][g]);
        if (!(prob > config.threshold)) continue;
        ++result.above_threshold;
        if (existing.contains(pair_key(probes[p]->image_id, gallery[g]->image_id))) continue;
        candidates.push_back({prob, probes[p], gallery[g]});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    if (a.probe->image_id != b.probe->image_id) return a.probe->image_id < b.probe->image_id;
    return a.gallery->image_id < b.gallery->image_id;
  });

  const auto target_negatives = static_cast<std::size_t>(
      std::llround(config.target_ratio * static_cast<double>(base.positives())));
  const std::size_t needed = target_negatives > base.negatives() ? target_negatives - base.negatives() : 0;
  const std::size_t take = std::min(needed, candidates.size());
  for (std::size_t i = 0; i < take; ++i) {
    result.mined.push_back({candidates[i].probe->image_id, candidates[i].gallery->image_id,
                            PairLabel::kNegative, PairSource::kMined});
  }
  if (result.above_threshold == 0) {
    result.warnings.push_back("no cross-identity pair scored above the mining threshold");
  } else if (take < needed) {
    result.warnings.push_back("only " + std::to_string(take) + " of " + std::to_string(needed) +
                              " requested hard negatives available; ratio stays below target");
  }
  return result;
}

// ---------------------------------------------------------------------------

void save_pair_set(const PairSet& set, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PairError("cannot write pair set: " + path.string());
  out << "# mvb-pairset 1\n";
  out << "# provenance " << set.provenance.dump() << '\n';
  out << "# probe_image_id\tgallery_image_id\tlabel\tsource\n";
  for (const auto& s : set.samples) {
    out << s.probe_image_id << '\t' << s.gallery_image_id << '\t' << to_string(s.label) << '\t'
        << to_string(s.source) << '\n';
  }
}

PairSet load_pair_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PairError("cannot open pair set: " + path.string());
  PairSet set;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with("# mvb-pairset ")) {
      if (line != "# mvb-pairset 1") throw PairError("unsupported pair set version");
      header = true;
      continue;
    }
    if (line.starts_with("# provenance ")) {
      set.provenance = nlohmann::ordered_json::parse(line.substr(13));
      continue;
    }
    if (line.starts_with("#")) continue;
    if (!header) throw PairError("missing pair set header");
    std::istringstream fields(line);
    std::string probe, gallery, label, source;
    if (!std::getline(fields, probe, '\t') || !std::getline(fields, gallery, '\t') ||
        !std::getline(fields, label, '\t') || !std::getline(fields, source, '\t')) {
      throw PairError("line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    PairSample s{probe, gallery, PairLabel::kNegative, PairSource::kBase};
    if (label == "POSITIVE") s.label = PairLabel::kPositive;
    else if (label != "NEGATIVE") throw PairError("line " + std::to_string(line_no) + ": bad label");
    if (source == "MINED") s.source = PairSource::kMined;
    else if (source != "BASE") throw PairError("line " + std::to_string(line_no) + ": bad source");
    set.samples.push_back(std::move(s));
  }
  if (!header) throw PairError("missing pair set header");
  return set;
}

}  // namespace mvb
