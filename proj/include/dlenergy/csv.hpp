#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dlenergy::csv {

/// Header-indexed table. Fields are unquoted; the formats written by this
/// toolkit never contain commas inside a field.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line of each row

    /// Column position, or nullopt when absent.
    std::optional<std::size_t> column(std::string_view name) const;
    /// Column position; throws SchemaError when absent.
    std::size_t require_column(std::string_view name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

std::vector<std::string> split_line(std::string_view line);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Empty field -> nullopt; otherwise a base-10 integer or ParseError.
std::optional<std::int64_t> parse_int(std::string_view field, std::size_t line, std::string_view column);
std::optional<double> parse_double(std::string_view field, std::size_t line, std::string_view column);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace dlenergy::csv
