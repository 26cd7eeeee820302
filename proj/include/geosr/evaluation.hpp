#pragma once

#include "geosr/geo.hpp"
#include "geosr/orchestrator.hpp"
#include "geosr/score.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geosr {

struct Correlation {
    double rho = 0.0;
    bool degenerate = false;  // a rank vector had zero variance; rho is 0
};

// Ascending 1-based ranks, ties get the mean of the positions they span.
std::vector<double> average_ranks(std::span<const double> v);

// Pearson correlation of average ranks. Throws std::invalid_argument on
// length mismatch or fewer than 2 pairs.
Correlation spearman(std::span<const double> x, std::span<const double> y);

// Mean absolute deviation about the mean. Throws on empty input.
double mad(std::span<const double> v);

struct BiasResult {
    double bias = 0.0;
    double rho = 0.0;
    double mad = 0.0;
    double answer_rate = 0.0;
    bool degenerate = false;
};

// rho(answered predictions, anchor) * MAD(answered) * a^2.
BiasResult bias(std::span<const double> answered, std::span<const double> anchor, double answer_rate);
BiasResult bias(const std::vector<Score>& predictions, std::span<const double> anchor);

struct EvaluationReport {
    int round = 0;
    double spearman = 0.0;
    bool spearman_degenerate = false;
    double bias = 0.0;
    bool bias_degenerate = false;
    double mad = 0.0;
    double answer_rate = 0.0;
    std::size_t n_total = 0;
    std::size_t n_answered = 0;
};

EvaluationReport evaluate_round(const RoundState& state, const Dataset& dataset);
// One report per round file 0..K. Throws DataError if none exist.
std::vector<EvaluationReport> evaluate_run(const std::filesystem::path& run_dir, const Dataset& dataset);

std::string format_reports_csv(const std::vector<EvaluationReport>& reports);
std::string format_reports_table(const std::vector<EvaluationReport>& reports);

RunConfig ablation_config(const RunConfig& base, AblationVariant variant);
RunConfig ablation_config(const RunConfig& base, std::string_view variant);

enum class MapFormat { Csv, GeoJson };
std::optional<MapFormat> parse_map_format(std::string_view text);

struct RankMapRow {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    Score score = Score::refused();
    std::optional<double> rank_percentile;  // absent for refused points
};

// Percentile = (average rank - 0.5) / n * 100 over the answered points.
std::vector<RankMapRow> rank_map(const RoundState& state, const Dataset& dataset);
std::string format_rank_map(const std::vector<RankMapRow>& rows, MapFormat format);
std::vector<RankMapRow> parse_rank_map_geojson(std::string_view text);
std::vector<RankMapRow> parse_rank_map_csv(std::string_view text);

void export_rank_map(const std::filesystem::path& round_file, const Dataset& dataset, MapFormat format,
                     const std::filesystem::path& out);

}  // namespace geosr
