#pragma once

#include "geosr/backend.hpp"
#include "geosr/geo.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <shared_mutex>
#include <string>
#include <vector>

namespace geosr {

enum class ContextMode { Live, CacheOnly, Synthetic };
enum class ContextSource { Live, Cache, Synthetic };

std::string_view to_string(ContextMode mode);
std::optional<ContextMode> parse_context_mode(std::string_view text);
std::string_view to_string(ContextSource source);

// 16-point compass rose name for a bearing in degrees.
std::string_view compass16(double bearing_deg);

struct NearbyPlace {
    std::string name;
    double distance_km = 0.0;
    std::string direction;

    friend bool operator==(const NearbyPlace&, const NearbyPlace&) = default;
};

// Map-derived enrichment for a Predict prompt: an address line and a list of
// nearby named places, nearest first.
struct ContextBlock {
    std::string address;
    std::vector<NearbyPlace> nearby;
    ContextSource source = ContextSource::Synthetic;

    // Sorts nearby ascending by distance (stable) and truncates.
    void normalize(std::size_t max_places);

    // Address line plus one "<d> km <Dir>: <name>" line per place.
    std::string render_nearby() const;

    nlohmann::json to_json() const;
    static ContextBlock from_json(const nlohmann::json& j, ContextSource source);
};

struct ContextConfig {
    ContextMode mode = ContextMode::Synthetic;
    std::filesystem::path cache_dir = "osm_cache";
    std::string reverse_base = "https://nominatim.openstreetmap.org";
    std::string overpass_url = "https://overpass-api.de/api/interpreter";
    std::size_t nearby_count = 10;
    double radius_km = 50.0;
    std::chrono::milliseconds politeness_delay{1000};
    std::chrono::seconds timeout{30};
    RetryPolicy retry{3, std::chrono::milliseconds(1000), 2.0, std::chrono::milliseconds(10000)};
    std::string user_agent = "geosr/0.1 (research prototype)";
};

// Applies GEOSR_OSM_BASE, when set, to both OSM endpoints.
void apply_osm_env(ContextConfig& config);

// Rounded-coordinate cache key, e.g. "12.3457_-45.0000".
std::string context_cache_key(double lat, double lon);

ContextBlock synthetic_context(const GeoPoint& point, std::size_t nearby_count, double radius_km);

class ContextProvider {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit ContextProvider(ContextConfig config, Sleeper sleeper = {});

    // Live: cache hit or reverse-geocode + nearby search, then cache.
    // CacheOnly: DataError on miss. Synthetic: deterministic from coordinates.
    ContextBlock build_context(const GeoPoint& point);

    std::size_t network_calls() const noexcept { return network_calls_.load(); }
    const ContextConfig& config() const noexcept { return config_; }

private:
    std::optional<ContextBlock> read_cache(const std::string& key);
    void write_cache(const std::string& key, const GeoPoint& point, const ContextBlock& block);
    ContextBlock fetch_live(const GeoPoint& point);
    std::string http_get(const std::string& base, const std::string& path);

    ContextConfig config_;
    Sleeper sleeper_;
    std::shared_mutex cache_mutex_;
    std::mutex host_mutex_;
    std::map<std::string, std::chrono::steady_clock::time_point> last_call_;
    std::atomic<std::size_t> network_calls_{0};
};

}  // namespace geosr
