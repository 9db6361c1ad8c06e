#include "advdet/perturb_gan.hpp"

#include <algorithm>
#include <cmath>

#include "advdet/error.hpp"

namespace advdet {

void GanPerturbConfig::validate() const {
  if (eps_min < 1 || eps_max < eps_min)
    throw ConfigError("eps range must satisfy 1 <= min <= max");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be > 0");
  if (!(subset_prob_min > 0.0 && subset_prob_max >= subset_prob_min && subset_prob_max <= 1.0))
    throw ConfigError("subset probability range must satisfy 0 < min <= max <= 1");
  if (patch_side_min < 1 || patch_side_max < patch_side_min)
    throw ConfigError("patch side range must satisfy 1 <= min <= max");
  if (!(dominant_patch_prob >= 0.0 && dominant_patch_prob <= 1.0))
    throw ConfigError("dominant_patch_prob must be in [0, 1]");
}

GradientColorPatch make_gc_patch(int height, int width, const double c0[3],
                                 const double c1[3], double theta, bool transpose) {
  GradientColorPatch patch;
  patch.height = height;
  patch.width = width;
  patch.data.resize(static_cast<size_t>(height) * width * 3);

  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double ax = std::cos(theta);
  const double ay = std::sin(theta);

  // Projection extent of the patch corners onto the gradient axis.
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int y : {0, height - 1}) {
    for (int x : {0, width - 1}) {
      const double p = (x - cx) * ax + (y - cy) * ay;
      if (first) {
        lo = hi = p;
        first = false;
      } else {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
      }
    }
  }
  const double span = hi - lo;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double p = (x - cx) * ax + (y - cy) * ay;
      const double t = span > 0.0 ? (p - lo) / span : 0.5;
      for (int c = 0; c < 3; ++c)
        patch.data[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)] =
            c0[c] + t * (c1[c] - c0[c]);
    }
  }

  if (transpose) {
    GradientColorPatch t;
    t.height = width;
    t.width = height;
    t.data.resize(patch.data.size());
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          t.data[(static_cast<size_t>(x) * height + y) * 3 + static_cast<size_t>(c)] =
              patch.at(y, x, c);
    return t;
  }
  return patch;
}

GradientColorPatch gen_gc_patch(double eps, int side_min, int side_max, Rng& rng) {
  const int h = static_cast<int>(rng.uniform_int(side_min, side_max));
  const int w = static_cast<int>(rng.uniform_int(side_min, side_max));
  const double bound = eps / 255.0;
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) c0[c] = rng.uniform(-bound, bound);
  for (int c = 0; c < 3; ++c) c1[c] = rng.uniform(-bound, bound);
  const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const bool transpose = rng.bernoulli(0.5);
  return make_gc_patch(h, w, c0, c1, theta, transpose);
}

RegionMask landmark_hull_union(const ImageTensor& img, const LandmarkSet& landmarks) {
  landmarks.validate_for(img);
  RegionMask total(img.height(), img.width());
  for (const char* name : kLandmarkGroups) {
    const auto hull = convex_hull(landmarks.group_points(name));
    total = total.unite(rasterize_hull(hull, img.height(), img.width()));
  }
  return total;
}

RegionMask select_high_freq_pixels(const ImageTensor& img, const LandmarkSet& landmarks,
                                   const GanPerturbConfig& cfg) {
  cfg.validate();
  const RegionMask hulls = landmark_hull_union(img, landmarks);
  if (hulls.count() == 0)
    throw DegenerateInputError("landmark hull union covers no pixels");

  const GrayImage grad = sobel_magnitude(img);
  RegionMask high(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (hulls.at(y, x) && grad.at(y, x) >= cfg.gamma) high.set(y, x, true);
  return high;
}

namespace {

void stamp_patch(PerturbationField& field, const GradientColorPatch& patch, int cy, int cx) {
  const int y0 = cy - (patch.height - 1) / 2;
  const int x0 = cx - (patch.width - 1) / 2;
  for (int py = 0; py < patch.height; ++py) {
    const int y = y0 + py;
    if (y < 0 || y >= field.height) continue;
    for (int px = 0; px < patch.width; ++px) {
      const int x = x0 + px;
      if (x < 0 || x >= field.width) continue;
      for (int c = 0; c < 3; ++c) field.at(y, x, c) = patch.at(py, px, c);
    }
  }
}

}  // namespace

GanPerturbResult perturb_image_gan(const ImageTensor& img, const LandmarkSet& landmarks,
                                   const GanPerturbConfig& cfg, Rng& rng) {
  const RegionMask high = select_high_freq_pixels(img, landmarks, cfg);
  if (high.count() == 0)
    throw DegenerateInputError("no pixel in the landmark hulls passes the gamma threshold");

  GanPerturbResult result;
  result.eps = static_cast<double>(rng.uniform_int(cfg.eps_min, cfg.eps_max));
  result.subset_prob = rng.uniform(cfg.subset_prob_min, cfg.subset_prob_max);
  result.dominant = gen_gc_patch(result.eps, cfg.patch_side_min, cfg.patch_side_max, rng);

  PerturbationField field(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (!high.at(y, x)) continue;
      if (!rng.bernoulli(result.subset_prob)) continue;
      result.anchors.push_back({static_cast<double>(x), static_cast<double>(y)});
      if (rng.bernoulli(cfg.dominant_patch_prob)) {
        stamp_patch(field, result.dominant, y, x);
        result.last_dominant_anchor = result.anchors.size() - 1;
      } else {
        const auto fresh = gen_gc_patch(result.eps, cfg.patch_side_min, cfg.patch_side_max, rng);
        stamp_patch(field, fresh, y, x);
      }
    }
  }

  result.noise = clip_perturbation(field, result.eps);
  result.image = apply_perturbation(img, result.noise);
  return result;
}

}  // namespace advdet
