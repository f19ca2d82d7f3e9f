#pragma once

namespace xsa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace xsa
