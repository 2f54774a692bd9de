#pragma once

namespace margin {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace margin
