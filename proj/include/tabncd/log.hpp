#pragma once

#include <string_view>

namespace tabncd {

enum class LogLevel { quiet = 0, warn = 1, info = 2, debug = 3 };

/// Level read once from TABNCD_VERBOSITY (quiet|warn|info|debug or 0-3); default warn.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_warn(std::string_view message);
void log_info(std::string_view message);
void log_debug(std::string_view message);

}  // namespace tabncd
