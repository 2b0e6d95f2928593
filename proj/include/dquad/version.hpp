#pragma once

namespace dquad {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dquad
