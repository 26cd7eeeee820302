#include "catch_amalgamated.hpp"

#include "geosr/error.hpp"
#include "geosr/field.hpp"
#include "geosr/mock_backend.hpp"
#include "geosr/rng.hpp"
#include "geosr/score.hpp"

#include <array>
#include <fmt/format.h>
#include <cmath>

using namespace geosr;
using Catch::Approx;

namespace {

// MT19937-64 written out from the reference algorithm, independent of <random>.
class Mt64 {
public:
    explicit Mt64(std::uint64_t seed) {
        mt_[0] = seed;
        for (idx_ = 1; idx_ < 312; ++idx_) {
            mt_[idx_] = 6364136223846793005ULL * (mt_[idx_ - 1] ^ (mt_[idx_ - 1] >> 62)) + idx_;
        }
    }
    std::uint64_t next() {
        if (idx_ >= 312) {
            for (int i = 0; i < 312; ++i) {
                std::uint64_t x = (mt_[i] & 0xFFFFFFFF80000000ULL) | (mt_[(i + 1) % 312] & 0x7FFFFFFFULL);
                std::uint64_t xa = x >> 1;
                if (x & 1) xa ^= 0xB5026F5AA96619E9ULL;
                mt_[i] = mt_[(i + 156) % 312] ^ xa;
            }
            idx_ = 0;
        }
        std::uint64_t y = mt_[idx_++];
        y ^= (y >> 29) & 0x5555555555555555ULL;
        y ^= (y << 17) & 0x71D67FFFEDA60000ULL;
        y ^= (y << 37) & 0xFFF7EEE000000000ULL;
        y ^= y >> 43;
        return y;
    }

private:
    std::array<std::uint64_t, 312> mt_{};
    std::size_t idx_ = 0;
};

double oracle_score(double lat, double lon, const FieldSpec& f, double sd, std::uint64_t seed) {
    const double pi = 3.14159265358979323846;
    double v = f.offset + f.lat * lat / 90 + f.abslat * std::fabs(lat) / 90 + f.lon * lon / 180 +
               f.wave * std::sin(f.wave_lat * lat * pi / 180) * std::cos(f.wave_lon * lon * pi / 180);
    v = (v - f.lo) / (f.hi - f.lo) * 9.9;
    v = std::min(std::max(v, 0.0), 9.9);
    Mt64 gen(seed);
    double u1 = 1.0 - static_cast<double>(gen.next() >> 11) / 9007199254740992.0;
    double u2 = static_cast<double>(gen.next() >> 11) / 9007199254740992.0;
    v += sd * std::sqrt(-2 * std::log(u1)) * std::cos(2 * pi * u2);
    v = std::round(v * 10) / 10;
    return std::min(std::max(v, 0.0), 9.9);
}

}  // namespace

TEST_CASE("reference MT19937-64 matches the published 10000th output") {
    Mt64 gen(5489);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = gen.next();
    CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("Score quantization and bounds") {
    CHECK(Score::from_value(7.3)->tenths() == 73);
    CHECK(Score::from_value(4.80)->str() == "4.8");
    CHECK(Score::from_value(4.86)->str() == "4.9");
    CHECK(Score::from_value(9.94)->tenths() == 99);
    CHECK_FALSE(Score::from_value(9.96));
    CHECK_FALSE(Score::from_value(-0.1));
    CHECK(Score::from_value(-0.04)->tenths() == 0);
    CHECK_FALSE(Score::from_value(std::nan("")));
    CHECK(Score::refused().str() == "REFUSED");
    CHECK(Score::parse_str("REFUSED")->is_refused());
    CHECK(Score::parse_str("0.0")->tenths() == 0);
    CHECK_FALSE(Score::parse_str("10.0"));
    CHECK_FALSE(Score::parse_str("3.45"));
    CHECK_THROWS(Score::from_tenths(100));
    for (int t = 0; t <= 99; ++t) {
        auto s = Score::from_tenths(t);
        CHECK(Score::parse_str(s.str()) == s);
    }
}

TEST_CASE("field evaluation and scaling") {
    FieldSpec f;
    f.offset = 2;
    f.lat = 9;
    f.lo = -7;
    f.hi = 11;
    CHECK(f.evaluate(45, 0) == Approx(6.5));
    CHECK(f.to_score_scale(2.0) == Approx(4.95));
    CHECK(f.to_score_scale(100) == 9.9);
    CHECK(f.to_score_scale(-100) == 0.0);
    auto parsed = FieldSpec::parse(default_truth_field().str());
    CHECK(parsed == default_truth_field());
    CHECK_THROWS_AS(FieldSpec::parse("bogus=1"), ConfigError);
    CHECK_THROWS_AS(FieldSpec::parse("lo=5,hi=5"), ConfigError);
}

TEST_CASE("mock_field_score examples") {
    FieldSpec constant;
    constant.offset = 5.0;
    constant.lo = 0.0;
    constant.hi = 9.9;
    for (double lat : {-80.0, 0.0, 33.3}) CHECK(mock_field_score(lat, 10, constant, 0.0, 1) == 5.0);

    FieldSpec linear;
    linear.offset = 0.0;
    linear.lat = 90.0;
    linear.lo = -90.0;
    linear.hi = 90.0;
    double prev = -1;
    for (double lat = -90; lat <= 90; lat += 2.5) {
        double s = mock_field_score(lat, 0, linear, 0.0, 0);
        CHECK(s >= prev);
        prev = s;
    }
    CHECK(prev == 9.9);
}

TEST_CASE("mock_field_score equals an independent reimplementation") {
    auto f = default_truth_field();
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const double lat = -89.0 + static_cast<double>(seed % 178);
        const double lon = -179.0 + static_cast<double>((seed * 7) % 358);
        CHECK(mock_field_score(lat, lon, f, 1.0, seed) == oracle_score(lat, lon, f, 1.0, seed));
    }
}

TEST_CASE("mock Predict reply follows the configured field") {
    MockConfig cfg;
    cfg.noise_sd = 0.0;
    MockBackend mock(cfg);
    BackendRequest req{AgentRole::Predict, "p", {{"point", {{"id", "x"}, {"lat", 0.0}, {"lon", 0.0}}}}, "r"};
    auto f = default_truth_field();
    const double expected = round_to_tenth(f.to_score_scale(f.evaluate(0, 0)));
    CHECK(mock.invoke(req).text == fmt::format("SCORE: {:.1f}", expected));
}

TEST_CASE("mock determinism across instances") {
    MockConfig cfg;
    cfg.noise_sd = 2.0;
    cfg.seed = 42;
    cfg.refusal_rate = 0.2;
    MockBackend a(cfg), b(cfg);
    int refusals = 0;
    for (int i = 0; i < 300; ++i) {
        BackendRequest req{AgentRole::Predict, "p",
                           {{"point", {{"id", "pt" + std::to_string(i)}, {"lat", i % 90}, {"lon", i % 180}}}}, "r"};
        auto t = a.invoke(req).text;
        CHECK(t == b.invoke(req).text);
        CHECK(t == a.invoke(req).text);
        refusals += t.find("cannot") != std::string::npos;
    }
    CHECK(refusals > 30);
    CHECK(refusals < 90);
}

TEST_CASE("mock refine policies") {
    MockConfig keep;
    keep.refine = MockRefinePolicy::AlwaysKeep;
    nlohmann::json payload = {{"point", {{"id", "t"}, {"lat", 0}, {"lon", 0}}},
                              {"current", "5.0"},
                              {"refs", {{{"id", "a"}, {"distance_km", 10.0}, {"score", "9.0"}}}}};
    CHECK(MockBackend(keep).invoke({AgentRole::Refine, "p", payload, "r"}).text == "KEEP");

    MockConfig idw;
    idw.idw_power = 2;
    idw.blend = 0.5;
    // two refs: 9.0 at 10 km and 1.0 at 20 km; weights 1/100 and 1/400
    payload["refs"].push_back({{"id", "b"}, {"distance_km", 20.0}, {"score", "1.0"}});
    const double est = (9.0 / 100 + 1.0 / 400) / (1.0 / 100 + 1.0 / 400);
    const double expected = round_to_tenth(0.5 * 5.0 + 0.5 * est);
    CHECK(MockBackend(idw).invoke({AgentRole::Refine, "p", payload, "r"}).text == fmt::format("UPDATE: {:.1f}", expected));

    payload["refs"] = {{{"id", "a"}, {"distance_km", 3.0}, {"score", "REFUSED"}}};
    CHECK(MockBackend(idw).invoke({AgentRole::Refine, "p", payload, "r"}).text == "KEEP");
}

TEST_CASE("anchor tilts are centered percentiles") {
    std::vector<GeoPoint> pts{GeoPoint("a", 0, 0), GeoPoint("b", 1, 1), GeoPoint("c", 2, 2), GeoPoint("d", 3, 3)};
    Dataset ds(pts, {0, 0, 0, 0}, {10, 40, 20, 20});
    auto t = anchor_tilts(ds);
    CHECK(t.at("a") == Approx(-0.75));
    CHECK(t.at("b") == Approx(0.75));
    CHECK(t.at("c") == Approx(0.0));
    CHECK(t.at("d") == Approx(0.0));
}
