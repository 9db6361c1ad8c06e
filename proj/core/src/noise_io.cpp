#include "advdet/noise_io.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "advdet/error.hpp"
#include "advdet/util.hpp"
#include "advdet/version.hpp"

namespace advdet {

namespace {

std::filesystem::path header_path_for(const std::filesystem::path& raw_path) {
  std::filesystem::path p = raw_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

std::filesystem::path noise_sidecar_path_for(const std::filesystem::path& image_path) {
  std::filesystem::path p = image_path;
  p.replace_extension();
  p += ".noise.raw";
  return p;
}

void save_noise_sidecar(const PerturbationField& field, double eps,
                        const std::filesystem::path& raw_path, const std::string& source) {
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  const double scale = 32767.0 / (eps / 255.0);

  std::vector<int16_t> raw(field.data.size());
  for (size_t i = 0; i < field.data.size(); ++i) {
    const long v = std::lround(field.data[i] * scale);
    raw[i] = static_cast<int16_t>(std::clamp(v, -32767L, 32767L));
  }

  // Little-endian byte order regardless of host.
  std::vector<uint8_t> bytes(raw.size() * 2);
  for (size_t i = 0; i < raw.size(); ++i) {
    const auto u = static_cast<uint16_t>(raw[i]);
    bytes[2 * i] = static_cast<uint8_t>(u & 0xff);
    bytes[2 * i + 1] = static_cast<uint8_t>(u >> 8);
  }
  write_binary_file(raw_path, bytes.data(), bytes.size());

  nlohmann::json header;
  header["version"] = kSidecarVersion;
  header["dtype"] = "int16le";
  header["height"] = field.height;
  header["width"] = field.width;
  header["channels"] = 3;
  header["layout"] = "hwc";
  header["scale"] = scale;
  header["source"] = source;
  write_text_file(header_path_for(raw_path), header.dump(2) + "\n");
}

PerturbationField load_noise_sidecar(const std::filesystem::path& raw_path) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_text_file(header_path_for(raw_path)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar header for " + raw_path.string() + ": " + e.what());
  }
  if (header.value("version", 0) != kSidecarVersion)
    throw VersionError("unsupported sidecar version");
  if (header.value("dtype", "") != "int16le" || header.value("layout", "") != "hwc")
    throw IoError("unsupported sidecar encoding");

  const int height = header.at("height").get<int>();
  const int width = header.at("width").get<int>();
  const int channels = header.at("channels").get<int>();
  const double scale = header.at("scale").get<double>();
  if (channels != 3 || height < 1 || width < 1 || !(scale > 0.0))
    throw IoError("invalid sidecar header: " + raw_path.string());

  const auto bytes = read_binary_file(raw_path);
  const size_t expected = static_cast<size_t>(height) * width * 3 * 2;
  if (bytes.size() != expected)
    throw IoError("sidecar raw size mismatch: " + raw_path.string());

  PerturbationField field(height, width);
  for (size_t i = 0; i < field.data.size(); ++i) {
    const auto u = static_cast<uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    field.data[i] = static_cast<double>(static_cast<int16_t>(u)) / scale;
  }
  return field;
}

}  // namespace advdet
