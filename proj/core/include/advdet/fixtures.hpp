#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/image.hpp"
#include "advdet/landmarks.hpp"

namespace advdet {

/// Axis-aligned feature region in fractions of the image side.
struct RegionRect {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Synthetic "face" fixture: smooth two-color background with low-amplitude
/// blobs, plus high-frequency checker/stripe textures at four canonical
/// regions whose landmark points follow the dlib-68 group layout.
struct FixtureSpec {
  int side = 64;
  double texture_amplitude = 0.25;   // 0..1 scale; 0 disables all texture
  double background_contrast = 0.35; // max per-channel spread of the gradient
  double blob_amplitude = 0.06;
  int blob_count = 3;
  // left_eye, right_eye, nose, mouth (canonical placement).
  std::array<RegionRect, 4> regions = {{{0.28, 0.36, 0.16, 0.12},
                                        {0.72, 0.36, 0.16, 0.12},
                                        {0.50, 0.55, 0.16, 0.22},
                                        {0.50, 0.78, 0.40, 0.12}}};
  uint64_t seed = 0;

  void validate() const;  // regions inside the image with >= 4 px margin
};

struct Fixture {
  ImageTensor image;
  LandmarkSet landmarks;
};

Fixture gen_fixture(const FixtureSpec& spec);

struct DatasetManifest {
  struct Item {
    std::string image;
    std::string landmarks;
    uint64_t seed = 0;
    std::string image_fnv1a64;
    std::string landmarks_fnv1a64;
  };
  int version = 0;
  uint64_t base_seed = 0;
  std::vector<Item> items;
};

/// Write `count` fixture PNG + landmark JSON pairs and a manifest into
/// out_dir; per-item seeds derive from the template seed and the index.
DatasetManifest gen_dataset(int count, const FixtureSpec& spec_template,
                            const std::filesystem::path& out_dir);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace advdet
