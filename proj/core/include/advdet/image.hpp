#pragma once

#include <cstdint>
#include <vector>

namespace advdet {

// Detector downsamples by 16, so image sides must be multiples of 16.
inline constexpr int kSideMultiple = 16;

/// H x W x 3 image with real values in [0, 1], row-major interleaved RGB.
class ImageTensor {
 public:
  ImageTensor() = default;
  // Throws DimensionError unless both sides are >= 16 and multiples of 16.
  ImageTensor(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  static constexpr int channels() { return 3; }
  size_t size() const { return data_.size(); }

  double& at(int y, int x, int c) { return data_[idx(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[idx(y, x, c)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  // Throws DimensionError / Error if shape or value invariants are violated.
  void check_invariants() const;

 private:
  size_t idx(int y, int x, int c) const {
    return (static_cast<size_t>(y) * width_ + x) * 3 + static_cast<size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Signed per-pixel RGB offsets; eps is the L-inf bound in 1/255 units.
struct PerturbationField {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // h*w*3, row-major interleaved

  PerturbationField() = default;
  PerturbationField(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(c)];
  }
  double max_abs() const;
};

/// Single-channel real image, e.g. Sobel magnitude on the 0..255 scale.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

/// Boolean per-pixel mask with the shape of its source image.
struct RegionMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  RegionMask() = default;
  RegionMask(int h, int w, bool fill = false)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int y, int x) const { return data[static_cast<size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { data[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
  size_t count() const;

  RegionMask unite(const RegionMask& other) const;
  // Chebyshev dilation by radius px.
  RegionMask dilate(int radius) const;
};

/// Sobel gradient magnitude on luminance (mean RGB), reported on the 0..255
/// scale so gamma thresholds keep their 8-bit meaning. Borders replicate.
GrayImage sobel_magnitude(const ImageTensor& img);

/// Clamp every offset into [-eps/255, +eps/255]. Idempotent.
PerturbationField clip_perturbation(const PerturbationField& field, double eps);

/// x + eta, then clamp into the [0, 1] image domain.
ImageTensor apply_perturbation(const ImageTensor& img, const PerturbationField& field);

/// a - b without any clipping.
PerturbationField residual(const ImageTensor& a, const ImageTensor& b);

}  // namespace advdet
