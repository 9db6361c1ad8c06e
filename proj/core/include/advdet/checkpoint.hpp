#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/detector.hpp"
#include "advdet/ood.hpp"

namespace advdet {

/// Self-describing model container: config, flat parameter arrays, seed
/// record, the last fitted feature Gaussian and (optionally) checksums of
/// the training images for train/eval overlap warnings.
struct Checkpoint {
  DetectorModel model;
  std::optional<GaussianModel> gaussian;
  std::vector<std::string> training_image_fnv;
};

nlohmann::json detector_config_to_json(const DetectorConfig& cfg);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);  // throws VersionError

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace advdet
