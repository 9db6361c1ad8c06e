#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace advdet {

// FNV-1a 64-bit over raw bytes; used for manifest checksums and
// train/eval overlap detection.
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string to_hex(uint64_t v);

std::string read_text_file(const std::filesystem::path& path);
std::vector<uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_binary_file(const std::filesystem::path& path, const void* data, size_t n);

// Sorted list of *.png files directly inside dir.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& dir);

// Static-partition parallel map over [0, n). Worker count comes from
// ADVDET_WORKERS when set, else hardware_concurrency. fn(i) must only touch
// index-i state; results are therefore schedule-independent.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);
int default_worker_count();

// Minimal JSON-Schema subset validator: supports "type", "required",
// "properties" and "items". Throws ConfigError with a path on violation.
void validate_schema(const nlohmann::json& value, const nlohmann::json& schema,
                     const std::string& path = "$");

}  // namespace advdet
