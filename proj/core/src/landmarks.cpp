#include "advdet/landmarks.hpp"

#include <json.hpp>

#include "advdet/error.hpp"
#include "advdet/util.hpp"

namespace advdet {

std::map<std::string, std::vector<int>> LandmarkSet::dlib68_groups() {
  std::map<std::string, std::vector<int>> g;
  auto range = [](int lo, int hi) {
    std::vector<int> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
  };
  g["left_eye"] = range(36, 41);
  g["right_eye"] = range(42, 47);
  g["nose"] = range(27, 35);
  g["mouth"] = range(48, 67);
  return g;
}

std::vector<Point2> LandmarkSet::group_points(const std::string& name) const {
  const auto it = groups.find(name);
  if (it == groups.end()) throw Error("landmark group missing: " + name);
  std::vector<Point2> pts;
  pts.reserve(it->second.size());
  for (int idx : it->second) {
    if (idx < 0 || static_cast<size_t>(idx) >= points.size())
      throw Error("landmark group index out of range in group " + name);
    pts.push_back(points[static_cast<size_t>(idx)]);
  }
  return pts;
}

void LandmarkSet::validate_for(const ImageTensor& img) const {
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x <= img.width() - 1 && p.y >= 0.0 && p.y <= img.height() - 1))
      throw Error("landmark point outside image bounds");
  }
  for (const char* name : kLandmarkGroups) {
    if (group_points(name).size() < 3)
      throw DegenerateInputError(std::string("landmark group too small: ") + name);
  }
}

std::filesystem::path landmarks_path_for(const std::filesystem::path& image_path) {
  std::filesystem::path p = image_path;
  p.replace_extension();
  p += ".landmarks.json";
  return p;
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("malformed landmark JSON " + path.string() + ": " + e.what());
  }
  if (!j.contains("points") || !j.at("points").is_array())
    throw IoError("landmark file missing 'points' array: " + path.string());

  LandmarkSet lm;
  for (const auto& p : j.at("points")) {
    if (!p.is_array() || p.size() != 2)
      throw IoError("landmark point must be [x, y]: " + path.string());
    lm.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  if (j.contains("groups")) {
    for (const auto& [name, idxs] : j.at("groups").items())
      lm.groups[name] = idxs.get<std::vector<int>>();
  } else {
    lm.groups = LandmarkSet::dlib68_groups();
  }
  return lm;
}

void save_landmarks(const LandmarkSet& lm, const std::filesystem::path& path) {
  nlohmann::json j;
  auto& pts = j["points"];
  pts = nlohmann::json::array();
  for (const auto& p : lm.points) pts.push_back({p.x, p.y});
  for (const auto& [name, idxs] : lm.groups) j["groups"][name] = idxs;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace advdet
