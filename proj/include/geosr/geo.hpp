#pragma once

#include "geosr/covariates.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace geosr {

inline constexpr double kEarthRadiusKm = 6371.0088;

class GeoPoint {
public:
    // Throws DataError when lat is outside [-90, 90], lon outside
    // [-180, 180], either is non-finite, or id is empty.
    GeoPoint(std::string id, double lat, double lon);

    const std::string& id() const noexcept { return id_; }
    double lat() const noexcept { return lat_; }
    double lon() const noexcept { return lon_; }

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
    std::string id_;
    double lat_;
    double lon_;
};

// Great-circle distance on a sphere of mean Earth radius.
double haversine_km(const GeoPoint& a, const GeoPoint& b);
double haversine_km(double lat1, double lon1, double lat2, double lon2);

// Initial bearing from a to b in degrees, [0, 360).
double bearing_deg(double lat1, double lon1, double lat2, double lon2);

// Points with index-aligned ground truth, anchor values and covariates.
class Dataset {
public:
    Dataset(std::vector<GeoPoint> points, std::vector<double> targets, std::vector<double> anchor,
            std::vector<CovariateRow> covariates = {});

    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const std::vector<GeoPoint>& points() const noexcept { return points_; }
    const GeoPoint& point(std::size_t i) const { return points_.at(i); }
    const std::vector<double>& targets() const noexcept { return targets_; }
    const std::vector<double>& anchor() const noexcept { return anchor_; }
    bool has_covariates() const noexcept { return !covariates_.empty(); }
    // Empty row when the dataset carries no covariates.
    const CovariateRow& covariates(std::size_t i) const;

    std::optional<std::size_t> index_of(std::string_view id) const;
    std::size_t require_index(std::string_view id) const;

    // Replaces covariates from a side table keyed by id. Ids missing from the
    // table get an empty row; ids in the table but not the dataset are an
    // error.
    Dataset with_covariates(const CovariateTable& table) const;

private:
    std::vector<GeoPoint> points_;
    std::vector<double> targets_;
    std::vector<double> anchor_;
    std::vector<CovariateRow> covariates_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// CSV with header `id,lat,lon,target,anchor[,bio1..bio19]`.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view text, std::string_view source_name = "<input>");
std::string format_dataset(const Dataset& dataset, bool include_covariates);

struct Neighbor {
    std::size_t index;
    double distance_km;
};

// Brute-force neighbor search over a dataset's points. Ties on distance are
// broken by ascending dataset index.
class SpatialIndex {
public:
    explicit SpatialIndex(const Dataset& dataset);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::string& id(std::size_t i) const { return ids_.at(i); }
    double lat(std::size_t i) const { return lat_.at(i); }
    double lon(std::size_t i) const { return lon_.at(i); }

    // All other points ordered by distance, truncated to `limit`.
    std::vector<Neighbor> neighbors(std::size_t target, std::size_t limit) const;
    std::vector<std::string> nearest_k(std::string_view target_id, std::size_t k) const;
    std::size_t require_index(std::string_view id) const;

private:
    std::vector<std::string> ids_;
    std::vector<double> lat_;
    std::vector<double> lon_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

SpatialIndex build_index(const Dataset& dataset);

}  // namespace geosr
