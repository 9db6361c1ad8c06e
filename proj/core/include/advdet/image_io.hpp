#pragma once

#include <filesystem>

#include "advdet/image.hpp"

namespace advdet {

/// Decode an 8-bit PNG into [0,1] reals (integer / 255). Gray, palette and
/// alpha inputs are expanded/stripped to RGB. Throws IoError on missing or
/// undecodable files and DimensionError on unsupported sizes.
ImageTensor load_image(const std::filesystem::path& path);

/// Encode as 8-bit RGB PNG, rounding each value to the nearest 1/255 step,
/// so load(save(img)) differs from img by at most 1/510 per value.
void save_image(const ImageTensor& img, const std::filesystem::path& path);

}  // namespace advdet
