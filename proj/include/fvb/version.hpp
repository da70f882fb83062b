#pragma once

namespace fvb {

inline constexpr const char* version = "0.1.0";

}  // namespace fvb
