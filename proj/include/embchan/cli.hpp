#pragma once

#include <ostream>
#include <string>

namespace embchan {

/// Command-line front end. Returns 0 on success, 1 on invalid input and 2
/// on numerical failure (including any failed sweep point).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// 17 significant digits; "nan", "inf" and "-inf" for non-finite values.
std::string format_number(double value);

/// Write `content` to a temporary file beside `path`, then rename it over.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace embchan
