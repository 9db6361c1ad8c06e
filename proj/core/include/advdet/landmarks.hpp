#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "advdet/geometry.hpp"
#include "advdet/image.hpp"

namespace advdet {

// Landmark group names consumed by the GC perturbation.
inline constexpr const char* kLandmarkGroups[4] = {"left_eye", "right_eye", "nose", "mouth"};

/// Named facial keypoint groups. Groups default to the dlib-68 convention
/// when a landmark file carries no explicit group map.
struct LandmarkSet {
  std::vector<Point2> points;
  std::map<std::string, std::vector<int>> groups;

  // dlib-68 index ranges: left_eye 36-41, right_eye 42-47, nose 27-35,
  // mouth 48-67.
  static std::map<std::string, std::vector<int>> dlib68_groups();

  std::vector<Point2> group_points(const std::string& name) const;

  // Bounds + group-size checks against an image. Throws on violation.
  void validate_for(const ImageTensor& img) const;
};

/// `<stem>.landmarks.json` next to the image file.
std::filesystem::path landmarks_path_for(const std::filesystem::path& image_path);

/// Parse a landmark JSON file: {"points": [[x,y],...], "groups": {name: [i,...]}}.
/// Groups are optional; dlib-68 defaults apply when absent.
LandmarkSet load_landmarks(const std::filesystem::path& path);

void save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path);

}  // namespace advdet
