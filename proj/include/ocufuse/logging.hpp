#pragma once

#include <string>

namespace ocufuse {

enum class LogLevel { debug = 0, info = 1, warn = 2, err = 3, quiet = 4 };

// Level comes from the OCUFUSE_LOG environment variable
// (debug|info|warn|error|quiet); default is warn. Messages go to stderr.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_debug(const std::string& msg);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

}  // namespace ocufuse
