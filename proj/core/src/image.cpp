#include "advdet/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advdet/error.hpp"

namespace advdet {

namespace {

void check_side(int side, const char* name) {
  if (side < kSideMultiple || side % kSideMultiple != 0)
    throw DimensionError(std::string(name) + " must be a multiple of 16 and >= 16, got " +
                         std::to_string(side));
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, double fill)
    : height_(height), width_(width) {
  check_side(height, "height");
  check_side(width, "width");
  data_.assign(static_cast<size_t>(height) * width * 3, fill);
}

void ImageTensor::check_invariants() const {
  check_side(height_, "height");
  check_side(width_, "width");
  if (data_.size() != static_cast<size_t>(height_) * width_ * 3)
    throw DimensionError("image data size does not match shape");
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0))
      throw Error("image value outside [0,1]: " + std::to_string(v));
  }
}

double PerturbationField::max_abs() const {
  double m = 0.0;
  for (double v : data) m = std::max(m, std::fabs(v));
  return m;
}

size_t RegionMask::count() const {
  size_t n = 0;
  for (uint8_t v : data) n += v != 0;
  return n;
}

RegionMask RegionMask::unite(const RegionMask& other) const {
  if (height != other.height || width != other.width)
    throw DimensionError("mask shape mismatch in union");
  RegionMask out(height, width);
  for (size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] | other.data[i];
  return out;
}

RegionMask RegionMask::dilate(int radius) const {
  if (radius < 0) throw Error("dilation radius must be >= 0");
  RegionMask out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!at(y, x)) continue;
      const int y0 = std::max(0, y - radius), y1 = std::min(height - 1, y + radius);
      const int x0 = std::max(0, x - radius), x1 = std::min(width - 1, x + radius);
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) out.set(yy, xx, true);
    }
  }
  return out;
}

GrayImage sobel_magnitude(const ImageTensor& img) {
  const int h = img.height(), w = img.width();

  // Luminance on the 0..255 scale.
  GrayImage lum(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      lum.at(y, x) = (img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2)) / 3.0 * 255.0;

  static constexpr int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static constexpr int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};

  GrayImage mag(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Both kernels sum to zero, so responses can be accumulated against
      // the center value; constant images then cancel exactly.
      const double center = lum.at(y, x);
      double gx = 0.0, gy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          const double v = lum.at(yy, xx) - center;
          gx += kx[dy + 1][dx + 1] * v;
          gy += ky[dy + 1][dx + 1] * v;
        }
      }
      mag.at(y, x) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

PerturbationField clip_perturbation(const PerturbationField& field, double eps) {
  if (eps <= 0.0) throw ConfigError("eps must be > 0");
  const double bound = eps / 255.0;
  PerturbationField out = field;
  for (double& v : out.data) v = std::clamp(v, -bound, bound);
  return out;
}

ImageTensor apply_perturbation(const ImageTensor& img, const PerturbationField& field) {
  if (img.height() != field.height || img.width() != field.width)
    throw DimensionError("perturbation shape does not match image");
  ImageTensor out = img;
  for (size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = std::clamp(img.data()[i] + field.data[i], 0.0, 1.0);
  return out;
}

PerturbationField residual(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) throw DimensionError("residual shape mismatch");
  PerturbationField out(a.height(), a.width());
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data()[i] - b.data()[i];
  return out;
}

}  // namespace advdet
