#include "geosr/field.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"
#include "geosr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

namespace geosr {

double FieldSpec::evaluate(double lat_deg, double lon_deg) const {
    constexpr double rad = std::numbers::pi / 180.0;
    return offset + lat * (lat_deg / 90.0) + abslat * (std::abs(lat_deg) / 90.0) + lon * (lon_deg / 180.0) +
           wave * std::sin(wave_lat * lat_deg * rad) * std::cos(wave_lon * lon_deg * rad);
}

double FieldSpec::to_score_scale(double value) const {
    if (hi == lo) return 0.0;
    return std::clamp((value - lo) / (hi - lo) * 9.9, 0.0, 9.9);
}

FieldSpec FieldSpec::parse(std::string_view text) {
    FieldSpec spec;
    while (!text.empty()) {
        auto comma = text.find(',');
        auto item = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ConfigError(fmt::format("field spec: expected key=value, got '{}'", item));
        auto key = item.substr(0, eq);
        auto value = csv::parse_double(item.substr(eq + 1));
        if (!value) throw ConfigError(fmt::format("field spec: bad number for '{}'", key));
        if (key == "offset") spec.offset = *value;
        else if (key == "lat") spec.lat = *value;
        else if (key == "abslat") spec.abslat = *value;
        else if (key == "lon") spec.lon = *value;
        else if (key == "wave") spec.wave = *value;
        else if (key == "wave_lat") spec.wave_lat = *value;
        else if (key == "wave_lon") spec.wave_lon = *value;
        else if (key == "lo") spec.lo = *value;
        else if (key == "hi") spec.hi = *value;
        else throw ConfigError(fmt::format("field spec: unknown key '{}'", key));
    }
    if (spec.hi <= spec.lo) throw ConfigError("field spec: hi must exceed lo");
    return spec;
}

std::string FieldSpec::str() const {
    using csv::format_double;
    return fmt::format("offset={},lat={},abslat={},lon={},wave={},wave_lat={},wave_lon={},lo={},hi={}",
                       format_double(offset), format_double(lat), format_double(abslat), format_double(lon),
                       format_double(wave), format_double(wave_lat), format_double(wave_lon),
                       format_double(lo), format_double(hi));
}

FieldSpec default_truth_field() {
    FieldSpec f;
    f.offset = 27.0;
    f.abslat = -30.0;
    f.wave = 5.0;
    f.wave_lat = 2.0;
    f.wave_lon = 1.0;
    f.lo = -10.0;
    f.hi = 35.0;
    return f;
}

FieldSpec default_anchor_field() {
    FieldSpec f;
    f.offset = 300.0;
    f.lat = 150.0;
    f.lon = 60.0;
    f.wave = 250.0;
    f.wave_lat = 3.0;
    f.wave_lon = 2.0;
    f.lo = 0.0;
    f.hi = 800.0;
    return f;
}

double round_to_tenth(double v) {
    return std::round(v * 10.0) / 10.0;
}

double mock_field_score(double lat, double lon, const FieldSpec& field, double noise_sd, std::uint64_t rng_seed,
                        double shift) {
    double value = field.to_score_scale(field.evaluate(lat, lon)) + shift;
    if (noise_sd > 0.0) {
        std::mt19937_64 gen(rng_seed);
        value += noise_sd * rng::standard_normal(gen);
    }
    return std::clamp(round_to_tenth(value), 0.0, 9.9);
}

}  // namespace geosr
