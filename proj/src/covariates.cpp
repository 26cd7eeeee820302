#include "geosr/covariates.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace geosr {

std::optional<CovariateCode> CovariateCode::parse(std::string_view text) {
    if (text.size() < 4 || text.size() > 5) return std::nullopt;
    if (text.substr(0, 3) != "bio") return std::nullopt;
    auto digits = text.substr(3);
    if (digits.front() == '0') return std::nullopt;
    int n = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
    if (n < 1 || n > static_cast<int>(kCovariateCount)) return std::nullopt;
    return CovariateCode(static_cast<std::size_t>(n - 1));
}

CovariateCode CovariateCode::from_index(std::size_t index) {
    if (index >= kCovariateCount) throw std::out_of_range("covariate index out of range");
    return CovariateCode(index);
}

std::string CovariateCode::str() const {
    return fmt::format("bio{}", number());
}

const CovariateRegistry& CovariateRegistry::worldclim() {
    static const CovariateRegistry registry({{
        {"bio1", "Annual Mean Temperature", "Baseline thermal energy", "°C"},
        {"bio2", "Mean Diurnal Range", "Daily temperature stability", "°C"},
        {"bio3", "Isothermality", "Shape of thermal variability", "%"},
        {"bio4", "Temperature Seasonality", "Intensity of thermal pulses", "°C sd x100"},
        {"bio5", "Max Temperature of Warmest Month", "Acute heat stress", "°C"},
        {"bio6", "Min Temperature of Coldest Month", "Acute cold stress", "°C"},
        {"bio7", "Temperature Annual Range", "Climatic buffering capacity", "°C"},
        {"bio8", "Mean Temp. of Wettest Quarter", "Thermal conditions under high moisture", "°C"},
        {"bio9", "Mean Temp. of Driest Quarter", "Thermal conditions under low moisture", "°C"},
        {"bio10", "Mean Temp. of Warmest Quarter", "Prolonged heat exposure", "°C"},
        {"bio11", "Mean Temp. of Coldest Quarter", "Prolonged cold exposure", "°C"},
        {"bio12", "Annual Precipitation", "Total water input", "mm"},
        {"bio13", "Precipitation of Wettest Month", "Moisture extremes", "mm"},
        {"bio14", "Precipitation of Driest Month", "Moisture extremes", "mm"},
        {"bio15", "Precipitation Seasonality", "Drought risk", "CV %"},
        {"bio16", "Precipitation of Wettest Quarter", "Seasonal water allocation", "mm"},
        {"bio17", "Precipitation of Driest Quarter", "Seasonal water allocation", "mm"},
        {"bio18", "Precipitation of Warmest Quarter", "Temperature–precipitation coupling", "mm"},
        {"bio19", "Precipitation of Coldest Quarter", "Temperature–precipitation coupling", "mm"},
    }});
    return registry;
}

std::string CovariateRegistry::dump() const {
    std::string out = "code\tname\trelevance\tunit\n";
    for (const auto& e : entries_) {
        out += fmt::format("{}\t{}\t{}\t{}\n", e.code, e.name, e.relevance, e.unit);
    }
    return out;
}

CovariateSet CovariateSet::all() {
    CovariateSet s;
    s.bits_.set();
    return s;
}

std::vector<CovariateCode> CovariateSet::codes() const {
    std::vector<CovariateCode> out;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (bits_.test(i)) out.push_back(CovariateCode::from_index(i));
    }
    return out;
}

std::string CovariateSet::str() const {
    std::string out;
    for (auto code : codes()) {
        if (!out.empty()) out.push_back(';');
        out += code.str();
    }
    return out;
}

CovariateSet CovariateSet::parse_list(std::string_view text) {
    CovariateSet set;
    while (!text.empty()) {
        auto pos = text.find(';');
        auto token = text.substr(0, pos);
        if (!token.empty()) {
            auto code = CovariateCode::parse(token);
            if (!code) throw DataError(fmt::format("unknown covariate code '{}'", token));
            set.insert(*code);
        }
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + 1);
    }
    return set;
}

void CovariateRow::set(CovariateCode code, double value) {
    if (!std::isfinite(value)) {
        throw DataError(fmt::format("non-finite value for {}", code.str()));
    }
    values_[code.index()] = value;
}

std::size_t CovariateRow::size() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.has_value();
    return n;
}

CovariateSet CovariateRow::keys() const {
    CovariateSet s;
    for (std::size_t i = 0; i < kCovariateCount; ++i) {
        if (values_[i]) s.insert(CovariateCode::from_index(i));
    }
    return s;
}

CovariateRow project(const CovariateRow& row, const CovariateSet& selection) {
    CovariateRow out;
    for (auto code : selection.codes()) {
        if (auto v = row.get(code)) {
            out.set(code, *v);
        } else {
            spdlog::debug("project: {} not present in row, omitted", code.str());
        }
    }
    return out;
}

CovariateTable parse_covariates(std::string_view text, std::string_view source_name) {
    auto table = csv::parse(text, source_name);
    auto id_col = table.column("id");
    if (!id_col) throw DataError(fmt::format("{}: missing 'id' column", source_name));

    std::vector<std::pair<std::size_t, CovariateCode>> columns;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == *id_col) continue;
        auto code = CovariateCode::parse(table.header[c]);
        if (!code) {
            throw DataError(fmt::format("{}: unknown column '{}'", source_name, table.header[c]));
        }
        columns.emplace_back(c, *code);
    }

    CovariateTable out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        const auto& id = cells[*id_col];
        if (id.empty()) throw DataError(fmt::format("{}: row {} has an empty id", source_name, r + 1));
        CovariateRow row;
        for (auto [c, code] : columns) {
            const auto& cell = cells[c];
            if (cell.empty()) continue;
            auto value = csv::parse_double(cell);
            if (!value) {
                throw DataError(fmt::format("{}: row {} (id '{}') column '{}': invalid number '{}'",
                                            source_name, r + 1, id, code.str(), cell));
            }
            row.set(code, *value);
        }
        if (!out.emplace(id, row).second) {
            throw DataError(fmt::format("{}: duplicate id '{}'", source_name, id));
        }
    }
    return out;
}

CovariateTable load_covariates(const std::filesystem::path& path) {
    return parse_covariates(csv::read_file(path), path.string());
}

std::string format_covariates(const CovariateTable& table) {
    CovariateSet present;
    for (const auto& [id, row] : table) {
        for (auto code : row.keys().codes()) present.insert(code);
    }
    const auto codes = present.codes();
    std::vector<std::string> header{"id"};
    for (auto code : codes) header.push_back(code.str());
    std::string out = csv::join_row(header) + "\n";
    for (const auto& [id, row] : table) {
        std::vector<std::string> cells{id};
        for (auto code : codes) {
            auto v = row.get(code);
            cells.push_back(v ? csv::format_double(*v) : std::string{});
        }
        out += csv::join_row(cells) + "\n";
    }
    return out;
}

void save_covariates(const std::filesystem::path& path, const CovariateTable& table) {
    csv::write_file_atomic(path, format_covariates(table));
}

}  // namespace geosr
