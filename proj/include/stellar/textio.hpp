#ifndef STELLAR_TEXTIO_HPP
#define STELLAR_TEXTIO_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stellar {

// Shortest decimal form that parses back to the exact same double.
std::string format_double(double v);

// Strict parsers: the whole field must be consumed, no leading whitespace.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace stellar

#endif  // STELLAR_TEXTIO_HPP
