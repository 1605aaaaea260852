#include "mvb/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mvb {

std::string_view to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::kMeanTopTwo: return "mean_top2";
    case AggregationRule::kBest: return "best";
    case AggregationRule::kMean: return "mean";
  }
  return "mean_top2";
}

AggregationRule parse_aggregation_rule(std::string_view text) {
  if (text == "mean_top2") return AggregationRule::kMeanTopTwo;
  if (text == "best") return AggregationRule::kBest;
  if (text == "mean") return AggregationRule::kMean;
  throw EvalError("unknown aggregation rule '" + std::string(text) + "'");
}

namespace {

bool better(double a, double b, ScoreKind kind) {
  return kind == ScoreKind::kDistance ? a < b : a > b;
}

}  // namespace

double aggregate_identity(std::span<const double> scores, ScoreKind kind, AggregationRule rule) {
  if (scores.empty()) throw EvalError("aggregate_identity: no scores");
  switch (rule) {
    case AggregationRule::kMean: {
      double sum = 0;
      for (double s : scores) sum += s;
      return sum / static_cast<double>(scores.size());
    }
    case AggregationRule::kBest:
      return *std::min_element(scores.begin(), scores.end(),
                               [kind](double a, double b) { return better(a, b, kind); });
    case AggregationRule::kMeanTopTwo:
      break;
  }
  if (scores.size() == 1) return scores[0];
  double first = scores[0];
  double second = scores[1];
  if (better(second, first, kind)) std::swap(first, second);
  for (std::size_t i = 2; i < scores.size(); ++i) {
    if (better(scores[i], first, kind)) {
      second = first;
      first = scores[i];
    } else if (better(scores[i], second, kind)) {
      second = scores[i];
    }
  }
  return (first + second) / 2.0;
}

std::vector<std::string> rank_identities(const std::map<std::string, double>& identity_scores,
                                         ScoreKind kind) {
  std::vector<std::pair<std::string, double>> items(identity_scores.begin(), identity_scores.end());
  std::stable_sort(items.begin(), items.end(), [kind](const auto& a, const auto& b) {
    if (a.second != b.second) return better(a.second, b.second, kind);
    return a.first < b.first;
  });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [id, score] : items) out.push_back(std::move(id));
  return out;
}

double CMCReport::at(int rank) const {
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] == rank) return values.at(i);
  }
  throw EvalError("rank " + std::to_string(rank) + " was not evaluated");
}

CMCReport cmc(const std::vector<std::vector<std::string>>& rankings,
              const std::vector<std::string>& ground_truth, std::vector<int> ranks) {
  if (rankings.size() != ground_truth.size()) {
    throw EvalError("cmc: rankings and ground truth differ in length");
  }
  CMCReport report;
  report.ranks = std::move(ranks);
  report.n_probes = rankings.size();
  std::set<std::string> identities;
  for (std::size_t p = 0; p < rankings.size(); ++p) {
    const auto& r = rankings[p];
    identities.insert(r.begin(), r.end());
    const auto it = std::find(r.begin(), r.end(), ground_truth[p]);
    if (it == r.end()) {
      throw EvalError("cmc: ground-truth identity '" + ground_truth[p] + "' missing from ranking " +
                      std::to_string(p));
    }
    report.ground_truth_ranks.push_back(static_cast<int>(it - r.begin()) + 1);
  }
  report.n_gallery_identities = identities.size();
  for (int k : report.ranks) {
    const auto hits = std::count_if(report.ground_truth_ranks.begin(), report.ground_truth_ranks.end(),
                                    [k](int pos) { return pos <= k; });
    report.values.push_back(report.n_probes == 0
                                ? 0.0
                                : static_cast<double>(hits) / static_cast<double>(report.n_probes));
  }
  return report;
}

CMCReport evaluate_score_tables(const std::vector<ScoreTable>& tables, const DatasetManifest& test,
                                const EvalConfig& config) {
  const auto index = test.by_id();
  std::vector<std::vector<std::string>> rankings;
  std::vector<std::string> truth;
  for (const auto& table : tables) {
    const auto probe = index.find(table.probe_id);
    if (probe == index.end()) throw EvalError("unknown probe '" + table.probe_id + "'");
    std::map<std::string, std::vector<double>> grouped;
    for (const auto& [gallery_id, score] : table.scores) {
      const auto g = index.find(gallery_id);
      if (g == index.end()) throw EvalError("unknown gallery image '" + gallery_id + "'");
      if (!std::isfinite(score)) throw EvalError("non-finite score for " + table.probe_id);
      grouped[g->second->identity_id].push_back(score);
    }
    if (!grouped.contains(probe->second->identity_id)) {
      throw EvalError("probe '" + table.probe_id + "' has no gallery image of its identity");
    }
    std::map<std::string, double> identity_scores;
    for (const auto& [id, scores] : grouped) {
      identity_scores[id] = aggregate_identity(scores, table.kind, config.rule);
    }
    rankings.push_back(rank_identities(identity_scores, table.kind));
    truth.push_back(probe->second->identity_id);
  }
  return cmc(rankings, truth, config.ranks);
}

EvaluationResult evaluate(SimilarityModel& model, const DatasetManifest& test, const EvalConfig& config) {
  std::vector<const ImageRecord*> probes, gallery;
  std::set<std::string> gallery_identities;
  for (const auto& r : test.records) {
    if (r.domain == Domain::kCheckpoint) {
      probes.push_back(&r);
    } else {
      gallery.push_back(&r);
      gallery_identities.insert(r.identity_id);
    }
  }
  for (const auto* p : probes) {
    if (!gallery_identities.contains(p->identity_id)) {
      throw EvalError("probe '" + p->image_id + "' has no gallery image of its identity");
    }
  }

  EvaluationResult result;
  const auto scores = probes.empty() ? std::vector<std::vector<double>>{} : model.score(probes, gallery);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    ScoreTable table{probes[p]->image_id, model.kind(), {}};
    table.scores.reserve(gallery.size());
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      table.scores.emplace_back(gallery[g]->image_id, scores[p][g]);
    }
    result.score_tables.push_back(std::move(table));
  }
  result.report = evaluate_score_tables(result.score_tables, test, config);
  return result;
}

nlohmann::ordered_json to_json(const CMCReport& report) {
  nlohmann::ordered_json cmc_values = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < report.ranks.size(); ++i) {
    cmc_values["rank" + std::to_string(report.ranks[i])] = report.values[i];
  }
  return {{"cmc", cmc_values},
          {"ranks", report.ranks},
          {"values", report.values},
          {"n_probes", report.n_probes},
          {"n_gallery_identities", report.n_gallery_identities},
          {"ground_truth_ranks", report.ground_truth_ranks}};
}

std::string render_cmc(const CMCReport& report) {
  std::ostringstream out;
  out << "probes: " << report.n_probes << "  gallery identities: " << report.n_gallery_identities
      << '\n';
  char buf[64];
  for (std::size_t i = 0; i < report.ranks.size(); ++i) {
    std::snprintf(buf, sizeof buf, "CMC@%d  %6.2f%%\n", report.ranks[i], 100.0 * report.values[i]);
    out << buf;
  }
  return out.str();
}

void write_score_tables(const std::vector<ScoreTable>& tables, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write score tables: " + path.string());
  out << "# probe_id\tgallery_image_id\tscore\tkind\n";
  char buf[64];
  for (const auto& t : tables) {
    for (const auto& [gallery_id, score] : t.scores) {
      std::snprintf(buf, sizeof buf, "%.9g", score);
      out << t.probe_id << '\t' << gallery_id << '\t' << buf << '\t' << to_string(t.kind) << '\n';
    }
  }
}

std::vector<ScoreTable> read_score_tables(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EvalError("cannot open score tables: " + path.string());
  std::vector<ScoreTable> tables;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.starts_with("#")) continue;
    std::istringstream fields(line);
    std::string probe, gallery, score, kind;
    if (!std::getline(fields, probe, '\t') || !std::getline(fields, gallery, '\t') ||
        !std::getline(fields, score, '\t') || !std::getline(fields, kind, '\t')) {
      throw EvalError("malformed score table line: " + line);
    }
    const ScoreKind k = kind == "DISTANCE" ? ScoreKind::kDistance : ScoreKind::kProbability;
    if (tables.empty() || tables.back().probe_id != probe) tables.push_back({probe, k, {}});
    tables.back().scores.emplace_back(gallery, std::stod(score));
  }
  return tables;
}

void write_cmc_svg(const std::vector<std::pair<std::string, CMCReport>>& curves,
                   const std::filesystem::path& path) {
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double w = 480, h = 320, left = 50, right = 170, top = 20, bottom = 40;
  const double pw = w - left - right, ph = h - top - bottom;
  int max_rank = 1;
  for (const auto& [name, r] : curves) {
    for (int k : r.ranks) max_rank = std::max(max_rank, k);
  }
  auto px = [&](int rank) { return left + (max_rank == 1 ? pw / 2 : pw * (rank - 1) / (max_rank - 1)); };
  auto py = [&](double v) { return top + ph * (1.0 - v); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int k = 1; k <= max_rank; ++k) {
    svg << "<text x=\"" << px(k) << "\" y=\"" << top + ph + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
        << k << "</text>\n";
  }
  for (int t = 0; t <= 4; ++t) {
    svg << "<text x=\"" << left - 6 << "\" y=\"" << py(t / 4.0) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">" << t * 25 << "%</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 6 << "\" font-size=\"12\" text-anchor=\"middle\">rank</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& [name, r] = curves[c];
    const char* color = kColors[c % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < r.ranks.size(); ++i) svg << px(r.ranks[i]) << ',' << py(r.values[i]) << ' ';
    svg << "\"/>\n";
    svg << "<text x=\"" << left + pw + 10 << "\" y=\"" << top + 14 * (c + 1) << "\" font-size=\"11\" fill=\""
        << color << "\">" << name << "</text>\n";
  }
  svg << "</svg>\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write plot: " + path.string());
  out << svg.str();
}

}  // namespace mvb
