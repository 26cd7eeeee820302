#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace geosr {

// A prediction on the 0.0..9.9 scale at one decimal, or an explicit refusal.
// Stored as integer tenths so quantization is exact.
class Score {
public:
    static constexpr int kMaxTenths = 99;

    static Score refused() { return Score(); }
    static Score from_tenths(int tenths);
    // Rounds to one decimal first; nullopt when the rounded value leaves
    // [0.0, 9.9] or the input is non-finite.
    static std::optional<Score> from_value(double v);

    bool is_refused() const noexcept { return !tenths_.has_value(); }
    bool has_value() const noexcept { return tenths_.has_value(); }
    int tenths() const { return tenths_.value(); }
    double value() const { return tenths_.value() / 10.0; }

    // "7.3" or "REFUSED"
    std::string str() const;
    static std::optional<Score> parse_str(std::string_view text);

    friend bool operator==(const Score&, const Score&) = default;

private:
    Score() = default;
    explicit Score(int tenths) : tenths_(tenths) {}
    std::optional<int> tenths_;
};

}  // namespace geosr
