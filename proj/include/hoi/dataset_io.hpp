#pragma once

#include <filesystem>
#include <memory>

#include <nlohmann/json.hpp>

#include "hoi/scene.hpp"

namespace hoi {

nlohmann::json taxonomy_to_json(const Taxonomy& tax);
Taxonomy taxonomy_from_json(const nlohmann::json& j);

/// One JSON document: taxonomy, generator settings, then scene records.
/// Feature grids are not stored.
void save_dataset(const std::filesystem::path& path, const Taxonomy& tax, const Dataset& ds);

struct LoadedDataset {
  std::unique_ptr<Taxonomy> taxonomy;  // stable address; scenes refer to it by index only
  Dataset dataset;
};

/// Reads a dataset file and regenerates every feature grid from the stored
/// generator seed.
LoadedDataset load_dataset(const std::filesystem::path& path);

}  // namespace hoi
