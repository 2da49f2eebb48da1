#pragma once

namespace dagfit {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dagfit
