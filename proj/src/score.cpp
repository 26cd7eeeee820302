#include "geosr/score.hpp"

#include "geosr/csv.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace geosr {

Score Score::from_tenths(int tenths) {
    if (tenths < 0 || tenths > kMaxTenths) throw std::out_of_range("score tenths outside [0, 99]");
    return Score(tenths);
}

std::optional<Score> Score::from_value(double v) {
    if (!std::isfinite(v)) return std::nullopt;
    const double t = std::round(v * 10.0);
    if (t < 0.0 || t > kMaxTenths) return std::nullopt;
    return Score(static_cast<int>(t));
}

std::string Score::str() const {
    if (!tenths_) return "REFUSED";
    return fmt::format("{}.{}", *tenths_ / 10, *tenths_ % 10);
}

std::optional<Score> Score::parse_str(std::string_view text) {
    if (text == "REFUSED") return refused();
    auto v = csv::parse_double(text);
    if (!v) return std::nullopt;
    auto s = from_value(*v);
    // persisted scores must already be on the one-decimal grid
    if (!s || std::abs(s->value() - *v) > 1e-9) return std::nullopt;
    return s;
}

}  // namespace geosr
