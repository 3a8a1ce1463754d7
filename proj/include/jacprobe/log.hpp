#pragma once

#include <string_view>

namespace jacprobe::log {

enum class Level { off = 0, info = 1, debug = 2 };

// Read once from JF_LOG (debug|info); anything else disables logging.
Level level();
void set_level(Level l);

void write(Level l, std::string_view message);

inline bool enabled(Level l) { return static_cast<int>(level()) >= static_cast<int>(l); }

} // namespace jacprobe::log
