#include "catch_amalgamated.hpp"

#include "geosr/error.hpp"
#include "geosr/evaluation.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace geosr;
using Catch::Approx;

namespace {

// Rank by counting: rank(x) = #less + (#equal + 1) / 2.
std::vector<double> count_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            less += w < v[i];
            equal += w == v[i];
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(count_ranks(x), count_ranks(y));
}

double oracle_mad(const std::vector<double>& v) {
    long double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    long double s = 0;
    for (double x : v) s += std::fabs(x - m);
    return static_cast<double>(s / v.size());
}

std::vector<double> tenths_vector(std::size_t n, std::mt19937_64& gen) {
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(gen() % 100) / 10.0;
    return v;
}

}  // namespace

TEST_CASE("average ranks") {
    std::vector<double> v{10, 20, 20, 5};
    CHECK(average_ranks(v) == std::vector<double>{2, 3.5, 3.5, 1});
    CHECK(average_ranks(std::vector<double>{}).empty());
    std::vector<double> same(5, 1.0);
    CHECK(average_ranks(same) == std::vector<double>(5, 3.0));
}

TEST_CASE("spearman examples") {
    std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
    CHECK(spearman(a, b).rho == Approx(0.8).epsilon(1e-12));
    std::vector<double> x{1, 2, 3}, y{1, 3, 2};
    CHECK(spearman(x, y).rho == Approx(0.5).epsilon(1e-12));
    std::vector<double> rev{4, 3, 2, 1};
    CHECK(spearman(a, rev).rho == Approx(-1.0).epsilon(1e-12));
    // ties: x = (1, 2, 2, 3) vs y = (1, 2, 3, 4)
    std::vector<double> t{1, 2, 2, 3};
    CHECK(spearman(t, a).rho == Approx(oracle_spearman({1, 2, 2, 3}, {1, 2, 3, 4})).margin(1e-12));

    std::vector<double> flat{5, 5, 5, 5};
    auto d = spearman(flat, a);
    CHECK(d.degenerate);
    CHECK(d.rho == 0.0);

    std::vector<double> one{1};
    CHECK_THROWS_AS(spearman(one, one), std::invalid_argument);
    std::vector<double> three{1, 2, 3};
    CHECK_THROWS_AS(spearman(a, three), std::invalid_argument);
}

TEST_CASE("mad examples") {
    std::vector<double> v{0, 10};
    CHECK(mad(v) == 5.0);
    std::vector<double> w{1, 2, 3, 4, 10};
    CHECK(mad(w) == Approx(2.4).epsilon(1e-12));
    std::vector<double> c{7, 7, 7};
    CHECK(mad(c) == 0.0);
    CHECK_THROWS(mad(std::vector<double>{}));
}

TEST_CASE("spearman matches counting-rank oracle with ties") {
    std::mt19937_64 gen(31);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + gen() % 150;
        auto x = tenths_vector(n, gen);
        auto y = tenths_vector(n, gen);
        auto r = spearman(x, y);
        CHECK(r.rho == Approx(oracle_spearman(x, y)).margin(1e-12));
        CHECK(r.rho >= -1.0 - 1e-12);
        CHECK(r.rho <= 1.0 + 1e-12);
    }
}

TEST_CASE("spearman closed form without ties") {
    std::mt19937_64 gen(32);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + gen() % 200;
        std::vector<double> x(n), y(n);
        std::iota(x.begin(), x.end(), 0.0);
        std::iota(y.begin(), y.end(), 0.0);
        std::shuffle(x.begin(), x.end(), gen);
        std::shuffle(y.begin(), y.end(), gen);
        double d2 = 0;
        for (std::size_t i = 0; i < n; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
        const double nn = static_cast<double>(n);
        CHECK(spearman(x, y).rho == Approx(1 - 6 * d2 / (nn * (nn * nn - 1))).margin(1e-12));
    }
}

TEST_CASE("spearman is invariant under monotone maps and symmetric") {
    std::mt19937_64 gen(33);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 3 + gen() % 100;
        auto x = tenths_vector(n, gen);
        auto y = tenths_vector(n, gen);
        std::vector<double> fx(n);
        std::transform(x.begin(), x.end(), fx.begin(), [](double v) { return std::exp(v) * 3 + 1; });
        CHECK(spearman(fx, y).rho == Approx(spearman(x, y).rho).margin(1e-12));
        CHECK(spearman(y, x).rho == Approx(spearman(x, y).rho).margin(1e-12));
        std::vector<double> neg(n);
        std::transform(x.begin(), x.end(), neg.begin(), [](double v) { return -v; });
        CHECK(spearman(neg, y).rho == Approx(-spearman(x, y).rho).margin(1e-12));
    }
}

TEST_CASE("mad properties") {
    std::mt19937_64 gen(34);
    std::uniform_real_distribution<double> u(-100, 100);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + gen() % 100);
        for (auto& x : v) x = u(gen);
        const double m = mad(v);
        CHECK(m >= 0.0);
        CHECK(m == Approx(oracle_mad(v)).margin(1e-12));
        std::vector<double> shifted(v), scaled(v);
        for (auto& x : shifted) x += 42.5;
        for (auto& x : scaled) x *= -3.0;
        CHECK(mad(shifted) == Approx(m).margin(1e-9));
        CHECK(mad(scaled) == Approx(3.0 * m).margin(1e-9));
    }
}

TEST_CASE("bias composes its factors") {
    std::vector<double> answered{1, 2, 3, 4}, anchor{10, 40, 20, 30};
    auto b = bias(answered, anchor, 0.5);
    const double rho = oracle_spearman({1, 2, 3, 4}, {10, 40, 20, 30});
    CHECK(b.rho == Approx(rho).margin(1e-12));
    CHECK(b.mad == Approx(1.0).margin(1e-12));
    CHECK(b.bias == Approx(rho * 1.0 * 0.25).margin(1e-12));
    CHECK(bias(answered, anchor, 0.0).bias == 0.0);

    std::vector<double> none;
    CHECK(bias(none, none, 0.0).bias == 0.0);
    std::vector<double> single{3}, single_anchor{9};
    auto s = bias(single, single_anchor, 1.0);
    CHECK(s.degenerate);
    CHECK(s.bias == 0.0);
}

TEST_CASE("bias from scores drops refusals but counts them in the rate") {
    std::vector<Score> preds{Score::from_tenths(10), Score::refused(), Score::from_tenths(30), Score::from_tenths(20),
                             Score::refused()};
    std::vector<double> anchor{5, 100, 7, 6, 200};
    auto b = bias(preds, anchor);
    CHECK(b.answer_rate == Approx(0.6));
    const double rho = oracle_spearman({1, 3, 2}, {5, 7, 6});
    const double m = oracle_mad({1, 3, 2});
    CHECK(b.bias == Approx(rho * m * 0.36).margin(1e-12));

    std::vector<Score> all_refused(3, Score::refused());
    std::vector<double> a3{1, 2, 3};
    auto z = bias(all_refused, a3);
    CHECK(z.bias == 0.0);
    CHECK(z.answer_rate == 0.0);
}

TEST_CASE("bias random compositions") {
    std::mt19937_64 gen(35);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + gen() % 120;
        std::vector<Score> preds;
        std::vector<double> anchor(n), ans, ans_anchor;
        for (std::size_t i = 0; i < n; ++i) {
            anchor[i] = static_cast<double>(gen() % 1000);
            if (gen() % 4 == 0) {
                preds.push_back(Score::refused());
            } else {
                preds.push_back(Score::from_tenths(static_cast<int>(gen() % 100)));
                ans.push_back(preds.back().value());
                ans_anchor.push_back(anchor[i]);
            }
        }
        auto b = bias(preds, anchor);
        const double a = static_cast<double>(ans.size()) / static_cast<double>(n);
        double expected = 0.0;
        if (ans.size() >= 2) expected = oracle_spearman(ans, ans_anchor) * oracle_mad(ans) * a * a;
        CHECK(b.bias == Approx(expected).margin(1e-12));
        CHECK(std::fabs(b.bias) <= oracle_mad(ans.empty() ? std::vector<double>{0} : ans) + 1e-12);
    }
}

TEST_CASE("evaluate_run agrees with an independent recomputation") {
    auto ds = testsupport::synthetic_dataset(120, 40);
    auto mock = testsupport::reference_mock(ds, 40);
    mock.refusal_rate = 0.1;
    testsupport::MockRun m(ds, mock);
    testsupport::TempDir dir;
    RunConfig cfg;
    cfg.rounds = 2;
    m.run(cfg, dir.path());
    auto reports = evaluate_run(dir.path(), ds);
    REQUIRE(reports.size() == 3);
    for (const auto& rep : reports) {
        auto t = csv::read(rundir::round_file(dir.path(), rep.round));
        std::vector<double> pred, truth, anchor;
        for (const auto& row : t.rows) {
            if (row[1] == "REFUSED") continue;
            const auto i = ds.require_index(row[0]);
            pred.push_back(std::stod(row[1]));
            truth.push_back(ds.targets()[i]);
            anchor.push_back(ds.anchor()[i]);
        }
        const double a = static_cast<double>(pred.size()) / static_cast<double>(ds.size());
        CHECK(rep.n_total == ds.size());
        CHECK(rep.n_answered == pred.size());
        CHECK(rep.answer_rate == Approx(a).margin(1e-12));
        CHECK(rep.spearman == Approx(oracle_spearman(pred, truth)).margin(1e-12));
        CHECK(rep.mad == Approx(oracle_mad(pred)).margin(1e-12));
        CHECK(rep.bias == Approx(oracle_spearman(pred, anchor) * oracle_mad(pred) * a * a).margin(1e-12));
    }
    auto text = format_reports_csv(reports);
    CHECK(text.rfind("round,spearman,bias,mad,answer_rate,n_total,n_answered\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
    CHECK(format_reports_table(reports).find("round") != std::string::npos);

    testsupport::TempDir empty;
    CHECK_THROWS_AS(evaluate_run(empty.path(), ds), DataError);
}

TEST_CASE("rank map percentiles") {
    std::vector<GeoPoint> pts{GeoPoint("b", 1, 2), GeoPoint("a", 3, 4), GeoPoint("c", 5, 6)};
    Dataset ds(pts, {0, 0, 0}, {0, 0, 0});
    RoundState s(1, {Score::from_tenths(80), Score::from_tenths(20), Score::refused()});
    auto rows = rank_map(s, ds);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].id == "a");
    CHECK(*rows[0].rank_percentile == Approx(25.0));
    CHECK(rows[1].id == "b");
    CHECK(*rows[1].rank_percentile == Approx(75.0));
    CHECK_FALSE(rows[2].rank_percentile);

    RoundState tie(1, {Score::from_tenths(50), Score::from_tenths(50), Score::from_tenths(50)});
    for (const auto& r : rank_map(tie, ds)) CHECK(*r.rank_percentile == Approx(50.0));
}

TEST_CASE("rank map exports round-trip") {
    auto ds = testsupport::synthetic_dataset(60, 41);
    std::mt19937_64 gen(41);
    std::vector<Score> scores;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        scores.push_back(gen() % 7 == 0 ? Score::refused() : Score::from_tenths(static_cast<int>(gen() % 100)));
    }
    RoundState s(2, scores);
    auto rows = rank_map(s, ds);
    for (auto fmt : {MapFormat::Csv, MapFormat::GeoJson}) {
        auto text = format_rank_map(rows, fmt);
        auto back = fmt == MapFormat::Csv ? parse_rank_map_csv(text) : parse_rank_map_geojson(text);
        REQUIRE(back.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(back[i].id == rows[i].id);
            CHECK(back[i].lat == rows[i].lat);
            CHECK(back[i].lon == rows[i].lon);
            CHECK(back[i].score == rows[i].score);
            CHECK(back[i].rank_percentile.has_value() == rows[i].rank_percentile.has_value());
            if (rows[i].rank_percentile) CHECK(*back[i].rank_percentile == Approx(*rows[i].rank_percentile).margin(1e-9));
        }
        CHECK(format_rank_map(back, fmt) == text);
    }
    auto geo = nlohmann::json::parse(format_rank_map(rows, MapFormat::GeoJson));
    CHECK(geo.at("type") == "FeatureCollection");
    const auto& f0 = geo.at("features").at(0);
    CHECK(f0.at("geometry").at("coordinates").at(0) == rows[0].lon);
    CHECK(f0.at("geometry").at("coordinates").at(1) == rows[0].lat);
}

TEST_CASE("export_rank_map writes from a round file") {
    auto ds = testsupport::synthetic_dataset(30, 42);
    testsupport::MockRun m(ds, testsupport::reference_mock(ds, 42));
    testsupport::TempDir dir;
    RunConfig cfg;
    cfg.rounds = 1;
    auto res = m.run(cfg, dir.path());
    export_rank_map(rundir::round_file(dir.path(), 1), ds, MapFormat::GeoJson, dir / "map.geojson");
    auto rows = parse_rank_map_geojson(testsupport::slurp(dir / "map.geojson"));
    auto expected = rank_map(*res.final_state, ds);
    REQUIRE(rows.size() == expected.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].score == expected[i].score);
    CHECK(parse_map_format("csv") == MapFormat::Csv);
    CHECK_FALSE(parse_map_format("kml"));
}
