#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvb/eval.hpp"
#include "mvb/nets/network.hpp"
#include "mvb/train.hpp"

namespace mvb {

/// One configuration of the merged / ATS / SE / mask grid.
struct AblationRow {
  bool merged = false;
  bool ats = false;
  bool se = false;
  bool mask = false;

  std::string name() const;
  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

/// The ten published configurations, basic rows first.
std::vector<AblationRow> default_grid();

/// `base` with the row's variant and SE switch applied.
nets::NetworkConfig network_for(const AblationRow& row, const nets::NetworkConfig& base);
/// `base` with the row's mining and mask switches applied.
TrainConfig train_config_for(const AblationRow& row, const TrainConfig& base);

struct AblationResult {
  AblationRow row;
  std::optional<CMCReport> report;
  std::string error;
  double seconds = 0;
};

struct AblationReport {
  std::vector<AblationResult> rows;
};

struct AblationData {
  const DatasetManifest* train = nullptr;
  const DatasetManifest* test = nullptr;
  PreparedImageCache::Loader loader;
};

using RowCallback = std::function<void(std::size_t index, const AblationResult&)>;

/// Trains and evaluates every row. A failing row is recorded with its error
/// and the remaining rows still run.
AblationReport run_ablation(const std::vector<AblationRow>& grid, const nets::NetworkConfig& base_net,
                            const TrainConfig& base_train, const AblationData& data,
                            const RowCallback& on_row = {});

nlohmann::ordered_json to_json(const AblationReport& report);
/// Fixed-width table: Merged ATS SE Mask | Rank1 Rank2 Rank3 (percent).
std::string render_table(const AblationReport& report);

}  // namespace mvb
