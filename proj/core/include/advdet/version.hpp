#pragma once

namespace advdet {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kCheckpointVersion = 1;
inline constexpr int kManifestVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kConfigVersion = 1;
inline constexpr int kSidecarVersion = 1;

}  // namespace advdet
