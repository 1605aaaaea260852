#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvb/data_model.hpp"
#include "mvb/scoring.hpp"

namespace mvb {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How one probe's scores against an identity's gallery images collapse into
/// a single identity score.
enum class AggregationRule {
  kMeanTopTwo,  // mean of the two best; a lone image stands for itself
  kBest,
  kMean,
};

std::string_view to_string(AggregationRule rule);
AggregationRule parse_aggregation_rule(std::string_view text);

double aggregate_identity(std::span<const double> scores, ScoreKind kind,
                          AggregationRule rule = AggregationRule::kMeanTopTwo);

/// Best first; equal scores fall back to identity id order.
std::vector<std::string> rank_identities(const std::map<std::string, double>& identity_scores,
                                         ScoreKind kind);

struct CMCReport {
  std::vector<int> ranks{1, 2, 3};
  std::vector<double> values;
  std::size_t n_probes = 0;
  std::size_t n_gallery_identities = 0;
  /// 1-based position of each probe's true identity.
  std::vector<int> ground_truth_ranks;

  double at(int rank) const;
  friend bool operator==(const CMCReport&, const CMCReport&) = default;
};

/// CMC@k is the fraction of probes whose true identity sits at position <= k.
CMCReport cmc(const std::vector<std::vector<std::string>>& rankings,
              const std::vector<std::string>& ground_truth, std::vector<int> ranks = {1, 2, 3});

struct EvalConfig {
  std::vector<int> ranks{1, 2, 3};
  AggregationRule rule = AggregationRule::kMeanTopTwo;
};

struct EvaluationResult {
  CMCReport report;
  std::vector<ScoreTable> score_tables;
};

/// Checkpoint images are probes, BHS images the gallery, grouped by the
/// manifest's identities.
EvaluationResult evaluate(SimilarityModel& model, const DatasetManifest& test,
                          const EvalConfig& config = {});

/// Ranking and CMC from precomputed score tables.
CMCReport evaluate_score_tables(const std::vector<ScoreTable>& tables, const DatasetManifest& test,
                                const EvalConfig& config = {});

nlohmann::ordered_json to_json(const CMCReport& report);
std::string render_cmc(const CMCReport& report);

void write_score_tables(const std::vector<ScoreTable>& tables, const std::filesystem::path& path);
std::vector<ScoreTable> read_score_tables(const std::filesystem::path& path);

/// Line plot of one or more CMC curves as a standalone SVG file.
void write_cmc_svg(const std::vector<std::pair<std::string, CMCReport>>& curves,
                   const std::filesystem::path& path);

}  // namespace mvb
