#pragma once

namespace fusion {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kArtifactSchemaVersion = 1;

}  // namespace fusion
