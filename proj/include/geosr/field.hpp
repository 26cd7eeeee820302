#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace geosr {

// Smooth analytic surface over the globe, used as hidden truth by the mock
// backend and by synthetic data generation:
//
//   f = offset + lat·(φ/90) + abslat·(|φ|/90) + lon·(λ/180)
//       + wave·sin(wave_lat·φ_rad)·cos(wave_lon·λ_rad)
//
// `lo`/`hi` declare the range mapped linearly onto the score scale.
struct FieldSpec {
    double offset = 0.0;
    double lat = 0.0;
    double abslat = 0.0;
    double lon = 0.0;
    double wave = 0.0;
    double wave_lat = 1.0;
    double wave_lon = 1.0;
    double lo = 0.0;
    double hi = 9.9;

    double evaluate(double lat_deg, double lon_deg) const;

    // Linear map of [lo, hi] onto [0, 9.9], clamped.
    double to_score_scale(double value) const;

    // "offset=27,abslat=-30,wave=5,lo=-10,hi=35"; unspecified keys keep
    // their defaults. Throws ConfigError on unknown keys or bad numbers.
    static FieldSpec parse(std::string_view text);
    std::string str() const;

    friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

// Temperature-like default truth field and a population-density-like
// default anchor field.
FieldSpec default_truth_field();
FieldSpec default_anchor_field();

double round_to_tenth(double v);

// clamp(round_to_tenth(scale(f(lat, lon)) + N(0, noise_sd)), 0.0, 9.9).
// The normal draw is the first Box-Muller sample of mt19937_64(rng_seed).
// `shift` is added on the score scale before the noise.
double mock_field_score(double lat, double lon, const FieldSpec& field, double noise_sd,
                        std::uint64_t rng_seed, double shift = 0.0);

}  // namespace geosr
