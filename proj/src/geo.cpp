#include "geosr/geo.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

namespace geosr {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

GeoPoint::GeoPoint(std::string id, double lat, double lon)
    : id_(std::move(id)), lat_(lat), lon_(lon) {
    if (id_.empty()) throw DataError("point id must not be empty");
    if (!std::isfinite(lat_) || lat_ < -90.0 || lat_ > 90.0) {
        throw DataError(fmt::format("point '{}': latitude {} outside [-90, 90]", id_, lat_));
    }
    if (!std::isfinite(lon_) || lon_ < -180.0 || lon_ > 180.0) {
        throw DataError(fmt::format("point '{}': longitude {} outside [-180, 180]", id_, lon_));
    }
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double p1 = lat1 * kDegToRad;
    const double p2 = lat2 * kDegToRad;
    const double sin_dlat = std::sin((p2 - p1) / 2.0);
    const double sin_dlon = std::sin((lon2 - lon1) * kDegToRad / 2.0);
    double h = sin_dlat * sin_dlat + std::cos(p1) * std::cos(p2) * sin_dlon * sin_dlon;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
    return haversine_km(a.lat(), a.lon(), b.lat(), b.lon());
}

double bearing_deg(double lat1, double lon1, double lat2, double lon2) {
    const double p1 = lat1 * kDegToRad;
    const double p2 = lat2 * kDegToRad;
    const double dl = (lon2 - lon1) * kDegToRad;
    const double y = std::sin(dl) * std::cos(p2);
    const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
    double deg = std::atan2(y, x) / kDegToRad;
    deg = std::fmod(deg + 360.0, 360.0);
    return deg >= 360.0 ? 0.0 : deg;
}

Dataset::Dataset(std::vector<GeoPoint> points, std::vector<double> targets, std::vector<double> anchor,
                 std::vector<CovariateRow> covariates)
    : points_(std::move(points)),
      targets_(std::move(targets)),
      anchor_(std::move(anchor)),
      covariates_(std::move(covariates)) {
    if (targets_.size() != points_.size() || anchor_.size() != points_.size()) {
        throw DataError("dataset: targets and anchor must be index-aligned with points");
    }
    if (!covariates_.empty() && covariates_.size() != points_.size()) {
        throw DataError("dataset: covariate rows must be index-aligned with points");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(targets_[i]) || !std::isfinite(anchor_[i])) {
            throw DataError(fmt::format("dataset: non-finite target/anchor for '{}'", points_[i].id()));
        }
        if (!by_id_.emplace(points_[i].id(), i).second) {
            throw DataError(fmt::format("dataset: duplicate id '{}'", points_[i].id()));
        }
    }
}

const CovariateRow& Dataset::covariates(std::size_t i) const {
    static const CovariateRow empty;
    if (covariates_.empty()) return empty;
    return covariates_.at(i);
}

std::optional<std::size_t> Dataset::index_of(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::size_t Dataset::require_index(std::string_view id) const {
    auto i = index_of(id);
    if (!i) throw DataError(fmt::format("unknown point id '{}'", id));
    return *i;
}

Dataset Dataset::with_covariates(const CovariateTable& table) const {
    std::vector<CovariateRow> rows(points_.size());
    for (const auto& [id, row] : table) {
        auto i = index_of(id);
        if (!i) throw DataError(fmt::format("covariates: id '{}' is not in the dataset", id));
        rows[*i] = row;
    }
    return Dataset(points_, targets_, anchor_, std::move(rows));
}

Dataset parse_dataset(std::string_view text, std::string_view source_name) {
    auto table = csv::parse(text, source_name);
    const char* required[] = {"id", "lat", "lon", "target", "anchor"};
    std::size_t col[5];
    for (int i = 0; i < 5; ++i) {
        auto c = table.column(required[i]);
        if (!c) throw DataError(fmt::format("{}: missing required column '{}'", source_name, required[i]));
        col[i] = *c;
    }
    std::vector<std::pair<std::size_t, CovariateCode>> bio_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (std::find(std::begin(col), std::end(col), c) != std::end(col)) continue;
        auto code = CovariateCode::parse(table.header[c]);
        if (!code) throw DataError(fmt::format("{}: unknown column '{}'", source_name, table.header[c]));
        bio_cols.emplace_back(c, *code);
    }

    std::vector<GeoPoint> points;
    std::vector<double> targets, anchor;
    std::vector<CovariateRow> rows;
    points.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& cells = table.rows[r];
        auto number = [&](std::size_t c, std::string_view name) {
            auto v = csv::parse_double(cells[c]);
            if (!v) {
                throw DataError(fmt::format("{}: row {} column '{}': invalid number '{}'", source_name, r + 1,
                                            name, cells[c]));
            }
            return *v;
        };
        points.emplace_back(cells[col[0]], number(col[1], "lat"), number(col[2], "lon"));
        targets.push_back(number(col[3], "target"));
        anchor.push_back(number(col[4], "anchor"));
        if (!bio_cols.empty()) {
            CovariateRow row;
            for (auto [c, code] : bio_cols) {
                if (cells[c].empty()) continue;
                row.set(code, number(c, code.str()));
            }
            rows.push_back(row);
        }
    }
    return Dataset(std::move(points), std::move(targets), std::move(anchor), std::move(rows));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return parse_dataset(csv::read_file(path), path.string());
}

std::string format_dataset(const Dataset& dataset, bool include_covariates) {
    CovariateSet present;
    if (include_covariates) {
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            for (auto code : dataset.covariates(i).keys().codes()) present.insert(code);
        }
    }
    std::vector<std::string> header{"id", "lat", "lon", "target", "anchor"};
    for (auto code : present.codes()) header.push_back(code.str());
    std::string out = csv::join_row(header) + "\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& p = dataset.point(i);
        std::vector<std::string> cells{p.id(), csv::format_double(p.lat()), csv::format_double(p.lon()),
                                       csv::format_double(dataset.targets()[i]),
                                       csv::format_double(dataset.anchor()[i])};
        for (auto code : present.codes()) {
            auto v = dataset.covariates(i).get(code);
            cells.push_back(v ? csv::format_double(*v) : std::string{});
        }
        out += csv::join_row(cells) + "\n";
    }
    return out;
}

SpatialIndex::SpatialIndex(const Dataset& dataset) {
    if (dataset.empty()) throw DataError("cannot build a spatial index over an empty dataset");
    ids_.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& p = dataset.point(i);
        ids_.push_back(p.id());
        lat_.push_back(p.lat());
        lon_.push_back(p.lon());
        by_id_.emplace(p.id(), i);
    }
}

std::size_t SpatialIndex::require_index(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) throw DataError(fmt::format("spatial index: unknown point id '{}'", id));
    return it->second;
}

std::vector<Neighbor> SpatialIndex::neighbors(std::size_t target, std::size_t limit) const {
    if (target >= ids_.size()) throw DataError("spatial index: target index out of range");
    std::vector<Neighbor> all;
    all.reserve(ids_.size() - 1);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (i == target) continue;
        all.push_back({i, haversine_km(lat_[target], lon_[target], lat_[i], lon_[i])});
    }
    auto closer = [](const Neighbor& a, const Neighbor& b) {
        if (a.distance_km != b.distance_km) return a.distance_km < b.distance_km;
        return a.index < b.index;
    };
    limit = std::min(limit, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(limit), all.end(), closer);
    all.resize(limit);
    return all;
}

std::vector<std::string> SpatialIndex::nearest_k(std::string_view target_id, std::size_t k) const {
    std::vector<std::string> out;
    for (const auto& n : neighbors(require_index(target_id), k)) out.push_back(ids_[n.index]);
    return out;
}

SpatialIndex build_index(const Dataset& dataset) {
    return SpatialIndex(dataset);
}

}  // namespace geosr
