#include "advdet/perturb_gradient.hpp"

#include <algorithm>
#include <string>

#include "advdet/error.hpp"

namespace advdet {

const char* to_string(GradientMode mode) {
  switch (mode) {
    case GradientMode::kPoint: return "point";
    case GradientMode::kBlock: return "block";
    case GradientMode::kMix: return "mix";
  }
  return "?";
}

GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "point") return GradientMode::kPoint;
  if (s == "block") return GradientMode::kBlock;
  if (s == "mix") return GradientMode::kMix;
  throw ConfigError("unknown gradient mode: " + s);
}

void GradientPerturbConfig::validate() const {
  if (eps <= 0.0) throw ConfigError("eps must be > 0");
  if (block_side_min < 1 || block_side_max < block_side_min)
    throw ConfigError("block side range must satisfy 1 <= min <= max");
  if (!(block_anchor_density > 0.0 && block_anchor_density <= 1.0))
    throw ConfigError("block_anchor_density must be in (0, 1]");
}

DirectionField sample_direction_field(int height, int width, Rng& rng) {
  DirectionField field;
  field.height = height;
  field.width = width;
  field.data.resize(static_cast<size_t>(height) * width * 3);
  for (auto& v : field.data) v = static_cast<int8_t>(rng.sign());
  return field;
}

PerturbationField gen_pointwise(int height, int width, const GradientPerturbConfig& cfg,
                                Rng& rng) {
  const DirectionField dir = sample_direction_field(height, width, rng);
  const double bound = cfg.eps / 255.0;
  PerturbationField field(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double alpha = rng.uniform01() * bound;
      for (int c = 0; c < 3; ++c) field.at(y, x, c) = alpha * dir.at(y, x, c);
    }
  }
  return clip_perturbation(field, cfg.eps);
}

PerturbationField gen_blockwise(int height, int width, const GradientPerturbConfig& cfg,
                                Rng& rng) {
  const DirectionField dir = sample_direction_field(height, width, rng);
  const double bound = cfg.eps / 255.0;
  PerturbationField field(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!rng.bernoulli(cfg.block_anchor_density)) continue;
      const int side =
          static_cast<int>(rng.uniform_int(cfg.block_side_min, cfg.block_side_max));
      const double alpha = rng.uniform01() * bound;
      double offset[3];
      for (int c = 0; c < 3; ++c) offset[c] = alpha * dir.at(y, x, c);

      const int y0 = std::max(0, y - (side - 1) / 2);
      const int x0 = std::max(0, x - (side - 1) / 2);
      const int y1 = std::min(height - 1, y0 + side - 1);
      const int x1 = std::min(width - 1, x0 + side - 1);
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx)
          for (int c = 0; c < 3; ++c) field.at(yy, xx, c) = offset[c];
    }
  }
  return clip_perturbation(field, cfg.eps);
}

PerturbationField sum_and_clip(const PerturbationField& a, const PerturbationField& b,
                               double eps) {
  if (a.height != b.height || a.width != b.width)
    throw DimensionError("field shape mismatch in sum");
  PerturbationField out(a.height, a.width);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return clip_perturbation(out, eps);
}

PerturbationField gen_mix(int height, int width, const GradientPerturbConfig& cfg, Rng& rng) {
  const PerturbationField point = gen_pointwise(height, width, cfg, rng);
  const PerturbationField block = gen_blockwise(height, width, cfg, rng);
  return sum_and_clip(point, block, cfg.eps);
}

GradientPerturbResult perturb_image_gradient(const ImageTensor& img,
                                             const GradientPerturbConfig& cfg, Rng& rng) {
  GradientMode mode;
  if (cfg.mode.has_value()) {
    mode = *cfg.mode;
  } else {
    mode = static_cast<GradientMode>(rng.uniform_int(0, 2));
  }

  PerturbationField field;
  switch (mode) {
    case GradientMode::kPoint:
      field = gen_pointwise(img.height(), img.width(), cfg, rng);
      break;
    case GradientMode::kBlock:
      field = gen_blockwise(img.height(), img.width(), cfg, rng);
      break;
    case GradientMode::kMix:
      field = gen_mix(img.height(), img.width(), cfg, rng);
      break;
  }
  return {apply_perturbation(img, field), std::move(field), mode};
}

}  // namespace advdet
