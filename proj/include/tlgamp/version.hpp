#pragma once

namespace tlgamp {
inline constexpr const char* kVersion = "0.1.0";
}
