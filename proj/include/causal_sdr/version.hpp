#pragma once

namespace causal_sdr {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kOutputSchemaVersion = 1;

}  // namespace causal_sdr
