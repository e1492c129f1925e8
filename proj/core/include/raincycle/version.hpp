#pragma once

namespace raincycle {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace raincycle
