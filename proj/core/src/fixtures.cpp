#include "advdet/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "advdet/error.hpp"
#include "advdet/image_io.hpp"
#include "advdet/rng.hpp"
#include "advdet/util.hpp"
#include "advdet/version.hpp"

namespace advdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive
  double xm() const { return (x0 + x1) / 2.0; }
  double ym() const { return (y0 + y1) / 2.0; }
};

PixelRect to_pixels(const RegionRect& r, int side, int jx, int jy) {
  return {static_cast<int>(std::lround((r.cx - r.w / 2) * side)) + jx,
          static_cast<int>(std::lround((r.cy - r.h / 2) * side)) + jy,
          static_cast<int>(std::lround((r.cx + r.w / 2) * side)) + jx,
          static_cast<int>(std::lround((r.cy + r.h / 2) * side)) + jy};
}

}  // namespace

void FixtureSpec::validate() const {
  if (side < kSideMultiple || side % kSideMultiple != 0)
    throw ConfigError("fixture side must be a positive multiple of 16");
  if (texture_amplitude < 0.0 || texture_amplitude > 0.4)
    throw ConfigError("texture_amplitude must be in [0, 0.4]");
  if (blob_count < 0) throw ConfigError("blob_count must be >= 0");
  for (const auto& r : regions) {
    const auto rect = to_pixels(r, side, 0, 0);
    if (rect.x0 < 4 || rect.y0 < 4 || rect.x1 > side - 5 || rect.y1 > side - 5)
      throw ConfigError("feature region too close to the image border (need 4 px margin)");
    if (rect.x1 - rect.x0 < 3 || rect.y1 - rect.y0 < 3)
      throw ConfigError("feature region too small");
  }
}

Fixture gen_fixture(const FixtureSpec& spec) {
  spec.validate();
  const int side = spec.side;
  Rng rng(spec.seed);

  // Background: two-color diagonal gradient.
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    const double mid = rng.uniform(0.40, 0.60);
    const double half = rng.uniform(0.0, spec.background_contrast / 2.0);
    c0[c] = mid - half;
    c1[c] = mid + half;
  }
  const int orient = static_cast<int>(rng.uniform_int(0, 3));

  ImageTensor img(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double t = 0.0;
      switch (orient) {
        case 0: t = static_cast<double>(x + y) / (2 * (side - 1)); break;
        case 1: t = static_cast<double>(x + (side - 1 - y)) / (2 * (side - 1)); break;
        case 2: t = static_cast<double>(x) / (side - 1); break;
        default: t = static_cast<double>(y) / (side - 1); break;
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = c0[c] + t * (c1[c] - c0[c]);
    }
  }

  // Low-amplitude smooth blobs.
  for (int b = 0; b < spec.blob_count; ++b) {
    const double bx = rng.uniform(0.0, side - 1.0);
    const double by = rng.uniform(0.0, side - 1.0);
    const double sigma = rng.uniform(side / 8.0, side / 5.0);
    const double amp = rng.uniform(-spec.blob_amplitude, spec.blob_amplitude);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double r2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        const double v = amp * std::exp(-r2 / (2.0 * sigma * sigma));
        for (int c = 0; c < 3; ++c) img.at(y, x, c) += v;
      }
    }
  }

  // Feature regions with high-frequency texture (period 2-4 px). Jitter is
  // clamped so the 4 px border margin survives.
  const int max_jitter = std::max(1, side / 32);
  std::array<PixelRect, 4> rects;
  for (size_t r = 0; r < 4; ++r) {
    const auto base = to_pixels(spec.regions[r], side, 0, 0);
    int jx = static_cast<int>(rng.uniform_int(-max_jitter, max_jitter));
    int jy = static_cast<int>(rng.uniform_int(-max_jitter, max_jitter));
    jx = std::clamp(jx, 4 - base.x0, side - 5 - base.x1);
    jy = std::clamp(jy, 4 - base.y0, side - 5 - base.y1);
    rects[r] = to_pixels(spec.regions[r], side, jx, jy);

    // Fixed period-4 checkerboard with a random phase. Period 2 would alias
    // to zero under the 3x3 Sobel kernels (taps sit on same-parity pixels),
    // leaving the high-frequency set empty; period 4 keeps Sobel responses
    // far above gamma. A single deterministic texture family keeps its
    // feature-space footprint constant across fixtures, which the
    // desk-scale detector needs to see past it.
    const int px = static_cast<int>(rng.uniform_int(0, 3));
    const int py = static_cast<int>(rng.uniform_int(0, 3));

    if (spec.texture_amplitude > 0.0) {
      for (int y = rects[r].y0; y <= rects[r].y1; ++y) {
        for (int x = rects[r].x0; x <= rects[r].x1; ++x) {
          const int parity = ((x + px) / 2 + (y + py) / 2) % 2;
          const double s = parity ? spec.texture_amplitude : -spec.texture_amplitude;
          for (int c = 0; c < 3; ++c) img.at(y, x, c) += s;
        }
      }
    }
  }

  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);

  // dlib-68 compatible landmarks; groups hull back to the region rects.
  LandmarkSet lm;
  lm.points.assign(68, Point2{});
  lm.groups = LandmarkSet::dlib68_groups();

  const double cx = 0.5 * side, cy = 0.50 * side;
  const double rx = 0.45 * side, ry = 0.44 * side;
  for (int i = 0; i <= 16; ++i) {
    const double theta = kPi * i / 16.0;
    lm.points[static_cast<size_t>(i)] = {cx - rx * std::cos(theta), cy + ry * std::sin(theta)};
  }
  auto brow = [&](int base, const PixelRect& eye) {
    const double y = std::max(1.0, eye.y0 - 0.06 * side);
    for (int i = 0; i < 5; ++i) {
      const double x = eye.x0 + (eye.x1 - eye.x0) * i / 4.0;
      lm.points[static_cast<size_t>(base + i)] = {x, y};
    }
  };
  brow(17, rects[0]);
  brow(22, rects[1]);

  auto rect_pt = [](const PixelRect& r, double fx, double fy) -> Point2 {
    return {r.x0 + fx * (r.x1 - r.x0), r.y0 + fy * (r.y1 - r.y0)};
  };

  // Nose (27-35): corners, edge midpoints, centroid.
  {
    const PixelRect& r = rects[2];
    const std::array<std::pair<double, double>, 9> f = {{{0, 0},
                                                         {0.5, 0},
                                                         {1, 0},
                                                         {1, 0.5},
                                                         {1, 1},
                                                         {0.5, 1},
                                                         {0, 1},
                                                         {0, 0.5},
                                                         {0.5, 0.5}}};
    for (size_t i = 0; i < 9; ++i)
      lm.points[27 + i] = rect_pt(r, f[i].first, f[i].second);
  }
  // Eyes (36-41, 42-47): corners plus vertical edge midpoints.
  auto eye_points = [&](int base, const PixelRect& r) {
    const std::array<std::pair<double, double>, 6> f = {
        {{0, 0}, {1, 0}, {1, 0.5}, {1, 1}, {0, 1}, {0, 0.5}}};
    for (size_t i = 0; i < 6; ++i)
      lm.points[static_cast<size_t>(base) + i] = rect_pt(r, f[i].first, f[i].second);
  };
  eye_points(36, rects[0]);
  eye_points(42, rects[1]);
  // Mouth (48-67): 20 points walking the rect perimeter.
  {
    const PixelRect& r = rects[3];
    size_t idx = 48;
    for (int i = 0; i <= 5; ++i) lm.points[idx++] = rect_pt(r, i / 5.0, 0.0);
    for (int i = 1; i <= 4; ++i) lm.points[idx++] = rect_pt(r, 1.0, i / 5.0);
    for (int i = 0; i <= 5; ++i) lm.points[idx++] = rect_pt(r, 1.0 - i / 5.0, 1.0);
    for (int i = 1; i <= 4; ++i) lm.points[idx++] = rect_pt(r, 0.0, 1.0 - i / 5.0);
  }

  lm.validate_for(img);
  return {std::move(img), std::move(lm)};
}

DatasetManifest gen_dataset(int count, const FixtureSpec& spec_template,
                            const std::filesystem::path& out_dir) {
  if (count < 0) throw ConfigError("count must be >= 0");
  spec_template.validate();
  std::filesystem::create_directories(out_dir);

  std::vector<Fixture> fixtures(static_cast<size_t>(count));
  parallel_for(static_cast<size_t>(count), [&](size_t i) {
    FixtureSpec spec = spec_template;
    spec.seed = derive_seed(spec_template.seed, i);
    fixtures[i] = gen_fixture(spec);
  });

  DatasetManifest manifest;
  manifest.version = kManifestVersion;
  manifest.base_seed = spec_template.seed;
  for (int i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "fixture_%05d", i);
    const std::string image_name = std::string(stem) + ".png";
    const std::string lm_name = std::string(stem) + ".landmarks.json";
    save_image(fixtures[static_cast<size_t>(i)].image, out_dir / image_name);
    save_landmarks(fixtures[static_cast<size_t>(i)].landmarks, out_dir / lm_name);

    DatasetManifest::Item item;
    item.image = image_name;
    item.landmarks = lm_name;
    item.seed = derive_seed(spec_template.seed, static_cast<uint64_t>(i));
    item.image_fnv1a64 = to_hex(fnv1a64_file(out_dir / image_name));
    item.landmarks_fnv1a64 = to_hex(fnv1a64_file(out_dir / lm_name));
    manifest.items.push_back(std::move(item));
  }
  write_text_file(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
  return manifest;
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["base_seed"] = m.base_seed;
  auto& items = j["items"];
  items = nlohmann::json::array();
  for (const auto& item : m.items) {
    nlohmann::json ji;
    ji["image"] = item.image;
    ji["landmarks"] = item.landmarks;
    ji["seed"] = item.seed;
    ji["image_fnv1a64"] = item.image_fnv1a64;
    ji["landmarks_fnv1a64"] = item.landmarks_fnv1a64;
    items.push_back(std::move(ji));
  }
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kManifestVersion)
    throw VersionError("unsupported manifest version " + std::to_string(m.version));
  m.base_seed = j.at("base_seed").get<uint64_t>();
  for (const auto& ji : j.at("items")) {
    DatasetManifest::Item item;
    item.image = ji.at("image").get<std::string>();
    item.landmarks = ji.value("landmarks", "");
    item.seed = ji.value("seed", uint64_t{0});
    item.image_fnv1a64 = ji.value("image_fnv1a64", "");
    item.landmarks_fnv1a64 = ji.value("landmarks_fnv1a64", "");
    m.items.push_back(std::move(item));
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace advdet
