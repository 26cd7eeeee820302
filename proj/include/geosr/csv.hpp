#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geosr::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, if present.
    std::optional<std::size_t> column(std::string_view name) const;
};

// RFC 4180 subset: comma separated, double-quote escaping, LF or CRLF line
// ends, optional UTF-8 BOM. Every row must have as many cells as the header.
Table parse(std::string_view text, std::string_view source_name = "<input>");
Table read(const std::filesystem::path& path);

std::string escape(std::string_view cell);
std::string join_row(const std::vector<std::string>& cells);

// Shortest representation that round-trips to the same double.
std::string format_double(double value);

// Strict decimal parse. Rejects NaN, infinities, trailing garbage and empty
// input by returning nullopt.
std::optional<double> parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename, so readers never observe a
// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace geosr::csv
