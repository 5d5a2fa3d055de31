#pragma once

// Versioned binary snapshot of every named parameter plus the hash of the
// config that produced it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hoi/detector.hpp"

namespace hoi {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::string config_hash;
  std::size_t n_params = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Detector& det, const std::string& config_hash);

/// Overwrites the detector's parameters. Names and shapes must match exactly;
/// a config hash that differs from `expected_hash` (when given) throws.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Detector& det,
                               const std::optional<std::string>& expected_hash = std::nullopt);

}  // namespace hoi
