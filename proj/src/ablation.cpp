#include "mvb/ablation.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "mvb/model.hpp"

namespace mvb {

std::string AblationRow::name() const {
  std::string n = merged ? "merged" : "basic";
  if (ats) n += "+ats";
  if (se) n += "+se";
  if (mask) n += "+mask";
  return n;
}

std::vector<AblationRow> default_grid() {
  return {
      {false, false, false, false}, {false, true, false, false}, {false, false, false, true},
      {false, true, false, true},   {true, false, false, false}, {true, true, false, false},
      {true, false, false, true},   {true, true, false, true},   {true, true, true, false},
      {true, true, true, true},
  };
}

nets::NetworkConfig network_for(const AblationRow& row, const nets::NetworkConfig& base) {
  nets::NetworkConfig c = base;
  c.variant = row.merged ? nets::Variant::kMerged : nets::Variant::kBasic;
  c.use_se = row.se;
  return c;
}

TrainConfig train_config_for(const AblationRow& row, const TrainConfig& base) {
  TrainConfig c = base;
  c.mining.enabled = row.ats;
  c.preprocess.use_mask = row.mask;
  return c;
}

AblationReport run_ablation(const std::vector<AblationRow>& grid, const nets::NetworkConfig& base_net,
                            const TrainConfig& base_train, const AblationData& data,
                            const RowCallback& on_row) {
  if (grid.empty()) throw TrainError("ablation grid is empty");
  if (data.train == nullptr || data.test == nullptr) throw TrainError("ablation needs train and test manifests");
  AblationReport report;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    AblationResult r{grid[i], std::nullopt, {}, 0};
    const auto start = std::chrono::steady_clock::now();
    try {
      const auto net_cfg = network_for(grid[i], base_net);
      const auto train_cfg = train_config_for(grid[i], base_train);
      auto trained = train(net_cfg, *data.train, data.loader, train_cfg);
      PreprocessConfig eval_prep = train_cfg.preprocess;
      eval_prep.train_mode = false;
      PreparedImageCache images(data.loader, eval_prep);
      NetworkModel model(trained.network, images, train_cfg.margin);
      r.report = evaluate(model, *data.test).report;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_row) on_row(i, r);
    report.rows.push_back(std::move(r));
  }
  return report;
}

nlohmann::ordered_json to_json(const AblationReport& report) {
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j{{"name", r.row.name()}, {"merged", r.row.merged}, {"ats", r.row.ats},
                             {"se", r.row.se},       {"mask", r.row.mask}};
    if (r.report) {
      j["rank1"] = r.report->at(1);
      j["rank2"] = r.report->at(2);
      j["rank3"] = r.report->at(3);
      j["report"] = to_json(*r.report);
    } else {
      j["error"] = r.error;
    }
    j["seconds"] = r.seconds;
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}};
}

std::string render_table(const AblationReport& report) {
  std::ostringstream out;
  out << "Merged  ATS  SE  Mask | Rank1(%)  Rank2(%)  Rank3(%)\n";
  out << "----------------------+-----------------------------\n";
  char buf[128];
  auto mark = [](bool b) { return b ? "x" : " "; };
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "  %s     %s    %s    %s  |", mark(r.row.merged), mark(r.row.ats),
                  mark(r.row.se), mark(r.row.mask));
    out << buf;
    if (r.report) {
      std::snprintf(buf, sizeof buf, " %8.2f  %8.2f  %8.2f\n", 100 * r.report->at(1),
                    100 * r.report->at(2), 100 * r.report->at(3));
      out << buf;
    } else {
      out << " failed: " << r.error << '\n';
    }
  }
  return out.str();
}

}  // namespace mvb
