#pragma once
// Version information for the qbusrep library. MIT licensed; see LICENSE.

#include <string_view>

namespace qbr {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace qbr
