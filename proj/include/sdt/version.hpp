#pragma once

namespace sdt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sdt
