#include "geosr/csv.hpp"

#include "geosr/error.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

namespace geosr::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    return std::nullopt;
}

namespace {

std::string_view strip_bom(std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    return text;
}

}  // namespace

Table parse(std::string_view text, std::string_view source_name) {
    text = strip_bom(text);
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string cell;
    bool in_quotes = false;
    bool record_has_content = false;
    std::size_t line = 1;

    auto end_cell = [&] {
        record.push_back(std::move(cell));
        cell.clear();
    };
    auto end_record = [&] {
        end_cell();
        // blank lines are skipped
        if (!(record.size() == 1 && record.front().empty() && !record_has_content)) {
            records.push_back(std::move(record));
        }
        record.clear();
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            in_quotes = true;
            record_has_content = true;
            break;
        case ',':
            record_has_content = true;
            end_cell();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            cell.push_back(c);
            break;
        case '\n':
            end_record();
            ++line;
            break;
        default:
            record_has_content = true;
            cell.push_back(c);
        }
    }
    if (in_quotes) {
        throw DataError(fmt::format("{}: unterminated quoted field near line {}", source_name, line));
    }
    if (!cell.empty() || !record.empty() || record_has_content) end_record();

    Table table;
    if (records.empty()) {
        throw DataError(fmt::format("{}: missing header row", source_name));
    }
    table.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw DataError(fmt::format("{}: row {} has {} cells, header has {}", source_name, r,
                                        records[r].size(), table.header.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

Table read(const std::filesystem::path& path) {
    return parse(read_file(path), path.string());
}

std::string escape(std::string_view cell) {
    if (cell.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(cell);
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string join_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out.push_back(',');
        out += escape(cells[i]);
    }
    return out;
}

std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw Error("format_double: buffer too small");
    return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value,
                                     std::chars_format::general);
    if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(fmt::format("cannot write {}", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw DataError(fmt::format("short write to {}", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace geosr::csv
