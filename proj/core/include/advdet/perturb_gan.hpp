#pragma once

#include <cstdint>
#include <vector>

#include "advdet/image.hpp"
#include "advdet/landmarks.hpp"
#include "advdet/rng.hpp"

namespace advdet {

/// Parameters of the GAN-attack-style gradient-color-patch perturbation.
struct GanPerturbConfig {
  int eps_min = 10;  // 1/255 units, magnitude drawn per image
  int eps_max = 70;
  double gamma = 50.0;  // Sobel threshold, 0..255 scale
  double subset_prob_min = 0.016;
  double subset_prob_max = 0.040;
  int patch_side_min = 2;
  int patch_side_max = 25;
  double dominant_patch_prob = 0.8;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Small patch of signed offsets forming a linear two-color gradient; per
/// channel monotone along the gradient axis, |value| <= eps/255.
struct GradientColorPatch {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // h*w*3

  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
};

/// Deterministic patch kernel: linear interpolation between endpoint colors
/// c0 and c1 along direction theta, optionally transposed.
GradientColorPatch make_gc_patch(int height, int width, const double c0[3],
                                 const double c1[3], double theta, bool transpose);

/// Random patch: size from side_range, endpoint colors uniform in
/// [-eps, +eps]/255 per channel, direction uniform in [0, 2pi), coin-flip
/// transpose.
GradientColorPatch gen_gc_patch(double eps, int side_min, int side_max, Rng& rng);

/// High-frequency pixel set H: union of the four landmark-group hulls,
/// intersected with {Sobel magnitude >= gamma}. Throws DegenerateInputError
/// when the hull union itself is empty.
RegionMask select_high_freq_pixels(const ImageTensor& img, const LandmarkSet& landmarks,
                                   const GanPerturbConfig& cfg);

struct GanPerturbResult {
  ImageTensor image;
  PerturbationField noise;       // clipped field that was applied
  double eps = 0.0;              // drawn magnitude, 1/255 units
  double subset_prob = 0.0;      // drawn anchor probability
  GradientColorPatch dominant;   // the shared patch
  std::vector<Point2> anchors;   // H_s in row-major order
  size_t last_dominant_anchor = SIZE_MAX;  // index into anchors, if any
};

/// Full Algorithm-2 pipeline: select H, draw eps and the anchor subset,
/// stamp gradient color patches centered on anchors (dominant patch with
/// probability dominant_patch_prob, fresh patch otherwise; later writes
/// overwrite earlier ones), clip and apply.
GanPerturbResult perturb_image_gan(const ImageTensor& img, const LandmarkSet& landmarks,
                                   const GanPerturbConfig& cfg, Rng& rng);

/// Union of the four landmark-group hull masks (no gamma filtering).
RegionMask landmark_hull_union(const ImageTensor& img, const LandmarkSet& landmarks);

}  // namespace advdet
