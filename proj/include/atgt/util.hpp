#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace atgt {

// Build version (git describe at configure time).
const char* version();

// Log levels are controlled by the ATGT_LOG environment variable only:
// error | warn | info | debug. Default: warn.
enum class LogLevel : int { error = 0, warn = 1, info = 2, debug = 3 };

namespace log {
bool enabled(LogLevel level);
void write(LogLevel level, const std::string& message);

inline void error(const std::string& m) { write(LogLevel::error, m); }
inline void warn(const std::string& m) { write(LogLevel::warn, m); }
inline void info(const std::string& m) { write(LogLevel::info, m); }
inline void debug(const std::string& m) { write(LogLevel::debug, m); }
}  // namespace log

// Runs fn(i) for i in [0, n). With threads <= 1 the loop is serial; otherwise
// indices are split into contiguous chunks. fn must only write to
// index-addressed slots so the result is independent of the thread count.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

// Deterministic, locale-independent double formatting used by every text
// report (CSV and SVG data tables must match byte-for-byte).
std::string fmt_double(double v);

}  // namespace atgt
