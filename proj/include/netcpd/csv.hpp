#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace netcpd::csv {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep = ',');

/// Parses a real; accepts "inf"/"+inf"/"-inf" (any case). Returns false on junk.
bool parse_double(std::string_view s, double& value);
bool parse_long(std::string_view s, long& value);

/// Shortest text that reads back to the same double; infinities as "inf"/"-inf".
std::string format_double(double v);

}  // namespace netcpd::csv
