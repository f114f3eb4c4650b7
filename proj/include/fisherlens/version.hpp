#pragma once

namespace fisherlens {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kMetricsSchemaVersion = 1;

}  // namespace fisherlens
