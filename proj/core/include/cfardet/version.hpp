#pragma once

namespace cfardet {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kVersionString = "cfardet 0.1.0";

}  // namespace cfardet
