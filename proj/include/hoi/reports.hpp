#pragma once

// JSON and CSV renderings of run artifacts.

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hoi/trainer.hpp"

namespace hoi {

nlohmann::json to_json(const LossReport& r);
nlohmann::json to_json(const ObjectiveToggles& t);
nlohmann::json to_json(const BiasReport& b);
nlohmann::json to_json(const RunRecord& r);

/// One line per epoch: lr, every loss term, the four mAP values.
std::string curves_csv(const RunRecord& r);

/// One line per run: row, seed, toggles, final mAP values, sibling error gap.
std::string ablation_csv(const std::vector<AblationRun>& runs);

struct AblationSummaryRow {
  std::string row;
  std::size_t runs = 0;
  double map_full = 0, map_rare = 0, map_nonrare = 0, map_known_object = 0;
};

/// Seed means per row, in first-appearance order.
std::vector<AblationSummaryRow> summarize(const std::vector<AblationRun>& runs);
std::string summary_csv(const std::vector<AblationSummaryRow>& rows);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hoi
