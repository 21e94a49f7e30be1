#pragma once

#include <string_view>

namespace fiberlab {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

/// Messages below this level are dropped. Defaults to warning.
void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::info, m); }
inline void log_warning(std::string_view m) { log(LogLevel::warning, m); }

/// Number of warnings emitted so far (all levels >= warning, even if dropped).
long long warning_count() noexcept;

}  // namespace fiberlab
