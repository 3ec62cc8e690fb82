#pragma once

namespace svsl {

inline constexpr const char* kToolName = "svsl";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace svsl
