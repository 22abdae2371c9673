#pragma once

#include <iostream>
#include <string_view>

namespace darkdeblur {

inline void log_info(std::string_view msg) { std::cerr << "[info] " << msg << '\n'; }
inline void log_warning(std::string_view msg) { std::cerr << "[warn] " << msg << '\n'; }

}  // namespace darkdeblur
