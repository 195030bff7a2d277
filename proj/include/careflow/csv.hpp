#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace careflow::csv {

/// Split one CSV line. Handles double-quoted fields with "" escapes; does not
/// handle embedded newlines.
std::vector<std::string> split_line(std::string_view line);

/// Quote a field only when it contains a separator, quote or newline.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Shortest round-trippable decimal for a double ("%.17g" trimmed).
std::string format_double(double v);

}  // namespace careflow::csv
