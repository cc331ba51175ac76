#pragma once

namespace malign {

inline constexpr const char* kVersion = "0.3.0";

}  // namespace malign
