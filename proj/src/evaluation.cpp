#include "geosr/evaluation.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include "json.hpp"
#include <numeric>
#include <stdexcept>

namespace geosr {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        // positions i..j-1 (0-based) share rank mean of i+1..j
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = r;
        i = j;
    }
    return ranks;
}

namespace {

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

}  // namespace

Correlation spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument(fmt::format("spearman: length mismatch ({} vs {})", x.size(), y.size()));
    }
    if (x.size() < 2) throw std::invalid_argument("spearman: fewer than 2 pairs");
    return pearson(average_ranks(x), average_ranks(y));
}

double mad(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mad: empty vector");
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double total = 0.0;
    for (double x : v) total += std::abs(x - mean);
    return total / static_cast<double>(v.size());
}

BiasResult bias(std::span<const double> answered, std::span<const double> anchor, double answer_rate) {
    if (answered.size() != anchor.size()) throw std::invalid_argument("bias: anchor not aligned with predictions");
    if (answer_rate < 0.0 || answer_rate > 1.0) throw std::invalid_argument("bias: answer rate outside [0, 1]");
    BiasResult out;
    out.answer_rate = answer_rate;
    if (answered.empty() || answer_rate == 0.0) return out;
    out.mad = mad(answered);
    if (answered.size() < 2) {
        out.degenerate = true;
        return out;
    }
    auto c = spearman(answered, anchor);
    out.rho = c.rho;
    out.degenerate = c.degenerate;
    if (!c.degenerate) out.bias = c.rho * out.mad * (answer_rate * answer_rate);
    return out;
}

BiasResult bias(const std::vector<Score>& predictions, std::span<const double> anchor) {
    if (predictions.size() != anchor.size()) throw std::invalid_argument("bias: anchor not aligned with predictions");
    if (predictions.empty()) throw std::invalid_argument("bias: no predictions");
    std::vector<double> y, d;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].is_refused()) continue;
        y.push_back(predictions[i].value());
        d.push_back(anchor[i]);
    }
    return bias(y, d, static_cast<double>(y.size()) / static_cast<double>(predictions.size()));
}

EvaluationReport evaluate_round(const RoundState& state, const Dataset& dataset) {
    if (state.size() != dataset.size()) throw DataError("round size does not match dataset");
    EvaluationReport r;
    r.round = state.round();
    r.n_total = state.size();
    std::vector<double> y, truth;
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state.at(i).is_refused()) continue;
        y.push_back(state.at(i).value());
        truth.push_back(dataset.targets()[i]);
    }
    r.n_answered = y.size();
    r.answer_rate = r.n_total ? static_cast<double>(r.n_answered) / static_cast<double>(r.n_total) : 0.0;
    if (y.size() >= 2) {
        auto c = spearman(y, truth);
        r.spearman = c.rho;
        r.spearman_degenerate = c.degenerate;
    } else {
        r.spearman_degenerate = true;
    }
    if (!y.empty()) r.mad = mad(y);
    auto b = bias(state.scores(), dataset.anchor());
    r.bias = b.bias;
    r.bias_degenerate = b.degenerate;
    return r;
}

std::vector<EvaluationReport> evaluate_run(const std::filesystem::path& run_dir, const Dataset& dataset) {
    const auto last = rundir::last_complete_round(run_dir);
    if (!last) throw DataError(fmt::format("{}: no round files", run_dir.string()));
    std::vector<EvaluationReport> reports;
    for (int k = 0; k <= *last; ++k) {
        try {
            reports.push_back(evaluate_round(load_round(rundir::round_file(run_dir, k), dataset, k), dataset));
        } catch (const ResumeError& e) {
            throw DataError(e.what());
        }
    }
    return reports;
}

std::string format_reports_csv(const std::vector<EvaluationReport>& reports) {
    std::string out = "round,spearman,bias,mad,answer_rate,n_total,n_answered\n";
    for (const auto& r : reports) {
        out += fmt::format("{},{},{},{},{},{},{}\n", r.round, csv::format_double(r.spearman),
                           csv::format_double(r.bias), csv::format_double(r.mad), csv::format_double(r.answer_rate),
                           r.n_total, r.n_answered);
    }
    return out;
}

std::string format_reports_table(const std::vector<EvaluationReport>& reports) {
    std::string out = fmt::format("{:>5}  {:>9}  {:>9}  {:>7}  {:>7}  {:>7}\n", "round", "spearman", "bias", "mad",
                                  "answer", "n");
    for (const auto& r : reports) {
        out += fmt::format("{:>5}  {:>8.4f}{}  {:>8.4f}{}  {:>7.4f}  {:>7.3f}  {:>3}/{:<3}\n", r.round, r.spearman,
                           r.spearman_degenerate ? '*' : ' ', r.bias, r.bias_degenerate ? '*' : ' ', r.mad,
                           r.answer_rate, r.n_answered, r.n_total);
    }
    bool any = std::any_of(reports.begin(), reports.end(),
                           [](const auto& r) { return r.spearman_degenerate || r.bias_degenerate; });
    if (any) out += "* zero rank variance, reported as 0\n";
    return out;
}

RunConfig ablation_config(const RunConfig& base, AblationVariant variant) {
    RunConfig c = base;
    c.use_nearest = true;
    c.use_point_select = true;
    c.use_covariates = true;
    c.variant = variant;
    switch (variant) {
    case AblationVariant::Full: break;
    case AblationVariant::NoNear10: c.use_nearest = false; break;
    case AblationVariant::NoPointSelect: c.use_point_select = false; break;
    case AblationVariant::NoExtVars: c.use_covariates = false; break;
    }
    return c;
}

RunConfig ablation_config(const RunConfig& base, std::string_view variant) {
    auto v = parse_ablation_variant(variant);
    if (!v) {
        throw ConfigError(fmt::format("unknown ablation variant '{}' (expected full, no_near10, no_ptsel, no_extvars)",
                                      variant));
    }
    return ablation_config(base, *v);
}

std::optional<MapFormat> parse_map_format(std::string_view text) {
    if (text == "csv") return MapFormat::Csv;
    if (text == "geojson") return MapFormat::GeoJson;
    return std::nullopt;
}

std::vector<RankMapRow> rank_map(const RoundState& state, const Dataset& dataset) {
    if (state.size() != dataset.size()) throw DataError("round size does not match dataset");
    std::vector<double> values;
    std::vector<std::size_t> answered;
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state.at(i).is_refused()) continue;
        values.push_back(state.at(i).value());
        answered.push_back(i);
    }
    const auto ranks = average_ranks(values);
    std::vector<RankMapRow> rows(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& p = dataset.point(i);
        rows[i] = {p.id(), p.lat(), p.lon(), state.at(i), std::nullopt};
    }
    const double n = static_cast<double>(values.size());
    for (std::size_t t = 0; t < answered.size(); ++t) {
        rows[answered[t]].rank_percentile = (ranks[t] - 0.5) / n * 100.0;
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return rows;
}

std::string format_rank_map(const std::vector<RankMapRow>& rows, MapFormat format) {
    if (format == MapFormat::Csv) {
        std::string out = "id,lat,lon,score,rank_percentile,refused\n";
        for (const auto& r : rows) {
            out += csv::join_row({r.id, csv::format_double(r.lat), csv::format_double(r.lon),
                                  r.score.is_refused() ? "" : r.score.str(),
                                  r.rank_percentile ? csv::format_double(*r.rank_percentile) : "",
                                  r.score.is_refused() ? "true" : "false"}) +
                   "\n";
        }
        return out;
    }
    nlohmann::json features = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json props{{"id", r.id}, {"refused", r.score.is_refused()}};
        props["score"] = r.score.is_refused() ? nlohmann::json(nullptr) : nlohmann::json(r.score.value());
        props["rank_percentile"] = r.rank_percentile ? nlohmann::json(*r.rank_percentile) : nlohmann::json(nullptr);
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Point"}, {"coordinates", {r.lon, r.lat}}}},
                            {"properties", props}});
    }
    return nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump(2) + "\n";
}

std::vector<RankMapRow> parse_rank_map_geojson(std::string_view text) {
    std::vector<RankMapRow> rows;
    try {
        auto doc = nlohmann::json::parse(text);
        for (const auto& f : doc.at("features")) {
            const auto& props = f.at("properties");
            const auto& coords = f.at("geometry").at("coordinates");
            RankMapRow r;
            r.id = props.at("id").get<std::string>();
            r.lon = coords.at(0).get<double>();
            r.lat = coords.at(1).get<double>();
            if (!props.at("score").is_null()) {
                auto s = Score::from_value(props.at("score").get<double>());
                if (!s) throw DataError("score out of range");
                r.score = *s;
            }
            if (!props.at("rank_percentile").is_null()) r.rank_percentile = props.at("rank_percentile").get<double>();
            rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("bad rank-map GeoJSON: {}", e.what()));
    }
    return rows;
}

std::vector<RankMapRow> parse_rank_map_csv(std::string_view text) {
    auto table = csv::parse(text, "rank map");
    std::vector<std::size_t> col;
    for (auto name : {"id", "lat", "lon", "score", "rank_percentile"}) {
        auto c = table.column(name);
        if (!c) throw DataError(fmt::format("rank map: missing column '{}'", name));
        col.push_back(*c);
    }
    std::vector<RankMapRow> rows;
    for (const auto& cells : table.rows) {
        RankMapRow r;
        r.id = cells[col[0]];
        auto lat = csv::parse_double(cells[col[1]]);
        auto lon = csv::parse_double(cells[col[2]]);
        if (!lat || !lon) throw DataError(fmt::format("rank map: bad coordinates for '{}'", r.id));
        r.lat = *lat;
        r.lon = *lon;
        if (!cells[col[3]].empty()) {
            auto s = Score::parse_str(cells[col[3]]);
            if (!s) throw DataError(fmt::format("rank map: bad score for '{}'", r.id));
            r.score = *s;
        }
        if (!cells[col[4]].empty()) r.rank_percentile = csv::parse_double(cells[col[4]]);
        rows.push_back(std::move(r));
    }
    return rows;
}

void export_rank_map(const std::filesystem::path& round_file, const Dataset& dataset, MapFormat format,
                     const std::filesystem::path& out) {
    RoundState state = [&] {
        try {
            return load_round(round_file, dataset, 0);
        } catch (const ResumeError& e) {
            throw DataError(e.what());
        }
    }();
    csv::write_file_atomic(out, format_rank_map(rank_map(state, dataset), format));
}

}  // namespace geosr
