#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "advdet/image.hpp"
#include "advdet/rng.hpp"

namespace advdet {

enum class GradientMode { kPoint, kBlock, kMix };

const char* to_string(GradientMode mode);
GradientMode gradient_mode_from_string(const std::string& s);

/// Parameters of the gradient-attack-style self-perturbation.
struct GradientPerturbConfig {
  double eps = 5.0;  // L-inf bound in 1/255 units
  std::optional<GradientMode> mode;  // unset: drawn uniformly per image
  int block_side_min = 2;
  int block_side_max = 8;
  double block_anchor_density = 0.02;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Per-pixel sign triples r_ij with components in {-1, +1}.
struct DirectionField {
  int height = 0;
  int width = 0;
  std::vector<int8_t> data;  // h*w*3

  int8_t at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
};

/// Each component independently uniform over {-1, +1}.
DirectionField sample_direction_field(int height, int width, Rng& rng);

/// Point-wise pattern: offset = alpha_ij * r_ij, alpha_ij ~ U[0, eps/255]
/// per pixel, then clipped.
PerturbationField gen_pointwise(int height, int width, const GradientPerturbConfig& cfg,
                                Rng& rng);

/// Block-wise pattern: Bernoulli(density) anchors; each anchor fills a
/// square neighborhood (side from the configured range, centered on the
/// anchor, cropped at borders) with one alpha * r triple. Later anchors
/// overwrite earlier ones in row-major order. Clipped.
PerturbationField gen_blockwise(int height, int width, const GradientPerturbConfig& cfg,
                                Rng& rng);

/// Element-wise sum of two fields clipped once to eps.
PerturbationField sum_and_clip(const PerturbationField& a, const PerturbationField& b,
                               double eps);

/// Mix pattern: point-wise + block-wise summed before a single clip.
PerturbationField gen_mix(int height, int width, const GradientPerturbConfig& cfg, Rng& rng);

struct GradientPerturbResult {
  ImageTensor image;
  PerturbationField noise;  // clipped field that was applied
  GradientMode mode = GradientMode::kPoint;
};

/// Full Algorithm-1 pipeline: draw the mode if unset, generate the field,
/// add it and clamp to the image domain.
GradientPerturbResult perturb_image_gradient(const ImageTensor& img,
                                             const GradientPerturbConfig& cfg, Rng& rng);

}  // namespace advdet
