#pragma once

#include "geosr/covariates.hpp"
#include "geosr/field.hpp"
#include "geosr/geo.hpp"

#include <cstdint>
#include <string>

namespace geosr {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int usage = 2;
inline constexpr int config = 3;
inline constexpr int data = 4;
inline constexpr int backend = 5;
inline constexpr int resume = 6;
}  // namespace exit_code

struct SynthOptions {
    std::size_t n = 200;
    std::uint64_t seed = 0;
    FieldSpec truth = default_truth_field();
    FieldSpec anchor = default_anchor_field();
    // Per-point log-normal spread of the anchor around its smooth field.
    double anchor_roughness = 1.0;
};

struct SynthData {
    Dataset dataset;
    CovariateTable covariates;
};

// Uniform lat/lon rounded to 4 decimals; the target is the truth field at
// the rounded coordinates; the anchor is max(anchor field, 1) times
// exp(roughness * z) with z standard normal; bio1..bio19 are smooth
// functions of latitude. Throws ConfigError when n < 2.
SynthData synthesize(const SynthOptions& options);

// bio values used by synthesize() at a given latitude.
CovariateRow synthetic_covariates(double lat);

int run_cli(int argc, const char* const* argv);

}  // namespace geosr
