#pragma once

namespace raregrad {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace raregrad
