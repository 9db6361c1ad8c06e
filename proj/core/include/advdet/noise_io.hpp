#pragma once

#include <filesystem>
#include <string>

#include "advdet/image.hpp"

namespace advdet {

/// Noise sidecar: raw little-endian int16 values (row-major interleaved
/// RGB) plus a JSON header `<raw path with .json>`. Stored value = raw /
/// scale with scale = 32767 / (eps/255), so the exact signed offsets
/// survive where PNG quantization would not.
void save_noise_sidecar(const PerturbationField& field, double eps,
                        const std::filesystem::path& raw_path, const std::string& source);

PerturbationField load_noise_sidecar(const std::filesystem::path& raw_path);

/// `<stem>.noise.raw` next to an image path.
std::filesystem::path noise_sidecar_path_for(const std::filesystem::path& image_path);

}  // namespace advdet
