#include "geosr/context.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"
#include "geosr/field.hpp"
#include "geosr/live_backend.hpp"
#include "geosr/rng.hpp"

#include "httplib.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <thread>

namespace geosr {

std::string_view to_string(ContextMode mode) {
    switch (mode) {
    case ContextMode::Live: return "live";
    case ContextMode::CacheOnly: return "cache-only";
    case ContextMode::Synthetic: return "synthetic";
    }
    return "unknown";
}

std::optional<ContextMode> parse_context_mode(std::string_view text) {
    if (text == "live") return ContextMode::Live;
    if (text == "cache-only") return ContextMode::CacheOnly;
    if (text == "synthetic") return ContextMode::Synthetic;
    return std::nullopt;
}

std::string_view to_string(ContextSource source) {
    switch (source) {
    case ContextSource::Live: return "live";
    case ContextSource::Cache: return "cache";
    case ContextSource::Synthetic: return "synthetic";
    }
    return "unknown";
}

std::string_view compass16(double bearing_deg) {
    static constexpr std::array<std::string_view, 16> names = {
        "North", "North-Northeast", "Northeast", "East-Northeast", "East", "East-Southeast",
        "Southeast", "South-Southeast", "South", "South-Southwest", "Southwest", "West-Southwest",
        "West", "West-Northwest", "Northwest", "North-Northwest"};
    double b = std::fmod(bearing_deg, 360.0);
    if (b < 0) b += 360.0;
    const auto sector = static_cast<std::size_t>(std::floor((b + 11.25) / 22.5)) % 16;
    return names[sector];
}

void ContextBlock::normalize(std::size_t max_places) {
    std::stable_sort(nearby.begin(), nearby.end(),
                     [](const NearbyPlace& a, const NearbyPlace& b) { return a.distance_km < b.distance_km; });
    if (nearby.size() > max_places) nearby.resize(max_places);
}

std::string ContextBlock::render_nearby() const {
    std::string out = fmt::format("Address: \"{}\"\nNearby Places: \"\n", address);
    for (const auto& p : nearby) {
        out += fmt::format("{:.1f} km {}: {}\n", p.distance_km, p.direction, p.name);
    }
    out += "\"";
    return out;
}

nlohmann::json ContextBlock::to_json() const {
    nlohmann::json places = nlohmann::json::array();
    for (const auto& p : nearby) {
        places.push_back({{"name", p.name}, {"distance_km", p.distance_km}, {"direction", p.direction}});
    }
    return {{"address", address}, {"nearby", places}};
}

ContextBlock ContextBlock::from_json(const nlohmann::json& j, ContextSource source) {
    ContextBlock block;
    block.address = j.at("address").get<std::string>();
    for (const auto& p : j.at("nearby")) {
        block.nearby.push_back(
            {p.at("name").get<std::string>(), p.at("distance_km").get<double>(), p.at("direction").get<std::string>()});
    }
    block.source = source;
    return block;
}

void apply_osm_env(ContextConfig& config) {
    if (const char* base = std::getenv("GEOSR_OSM_BASE"); base && *base) {
        std::string b(base);
        while (!b.empty() && b.back() == '/') b.pop_back();
        config.reverse_base = b;
        config.overpass_url = b + "/api/interpreter";
    }
}

namespace {

double round4(double v) {
    double r = std::round(v * 1e4) / 1e4;
    return r == 0.0 ? 0.0 : r;  // drop the sign of -0
}

constexpr std::array<std::string_view, 12> kSyllables = {"ka", "lo", "mi", "ren", "sa", "tor",
                                                          "vel", "an", "bri", "do", "ek", "um"};

}  // namespace

std::string context_cache_key(double lat, double lon) {
    return fmt::format("{:.4f}_{:.4f}", round4(lat), round4(lon));
}

ContextBlock synthetic_context(const GeoPoint& point, std::size_t nearby_count, double radius_km) {
    const double lat = round4(point.lat());
    const double lon = round4(point.lon());
    std::mt19937_64 gen(rng::fnv1a(context_cache_key(lat, lon)));
    ContextBlock block;
    block.source = ContextSource::Synthetic;
    block.address = fmt::format("Synthetic locality near {:.4f}, {:.4f}", lat, lon);
    for (std::size_t i = 0; i < nearby_count; ++i) {
        std::string name;
        const int parts = 2 + static_cast<int>(gen() % 2);
        for (int s = 0; s < parts; ++s) name += kSyllables[gen() % kSyllables.size()];
        name[0] = static_cast<char>(name[0] - 'a' + 'A');
        name += fmt::format(" {}", static_cast<int>(gen() % 90) + 10);
        const double bearing = rng::uniform(gen, 0.0, 360.0);
        const double distance = round_to_tenth(rng::uniform(gen, 0.5, radius_km));
        block.nearby.push_back({std::move(name), distance, std::string(compass16(bearing))});
    }
    block.normalize(nearby_count);
    return block;
}

ContextProvider::ContextProvider(ContextConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ContextBlock ContextProvider::build_context(const GeoPoint& point) {
    if (config_.mode == ContextMode::Synthetic) {
        return synthetic_context(point, config_.nearby_count, config_.radius_km);
    }
    const auto key = context_cache_key(point.lat(), point.lon());
    if (auto cached = read_cache(key)) return *cached;
    if (config_.mode == ContextMode::CacheOnly) {
        throw DataError(fmt::format("context cache miss for '{}' (key {}) in cache-only mode", point.id(), key));
    }
    auto block = fetch_live(point);
    write_cache(key, point, block);
    return block;
}

std::optional<ContextBlock> ContextProvider::read_cache(const std::string& key) {
    std::shared_lock lock(cache_mutex_);
    const auto path = config_.cache_dir / (key + ".json");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    try {
        return ContextBlock::from_json(nlohmann::json::parse(csv::read_file(path)), ContextSource::Cache);
    } catch (const nlohmann::json::exception& e) {
        spdlog::warn("ignoring corrupt context cache entry {}: {}", path.string(), e.what());
        return std::nullopt;
    }
}

void ContextProvider::write_cache(const std::string& key, const GeoPoint& point, const ContextBlock& block) {
    std::unique_lock lock(cache_mutex_);
    std::filesystem::create_directories(config_.cache_dir);
    auto j = block.to_json();
    j["lat"] = point.lat();
    j["lon"] = point.lon();
    csv::write_file_atomic(config_.cache_dir / (key + ".json"), j.dump(2) + "\n");
}

std::string ContextProvider::http_get(const std::string& base, const std::string& path) {
    // one request in flight per host, spaced by the politeness delay
    std::unique_lock gate(host_mutex_);
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (auto it = last_call_.find(base); it != last_call_.end()) {
            const auto ready = it->second + config_.politeness_delay;
            const auto now = std::chrono::steady_clock::now();
            if (ready > now) sleeper_(std::chrono::duration_cast<std::chrono::milliseconds>(ready - now));
        }
        httplib::Client client(base);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_follow_location(true);
        ++network_calls_;
        auto res = client.Get(path, httplib::Headers{{"User-Agent", config_.user_agent}});
        last_call_[base] = std::chrono::steady_clock::now();
        if (res && res->status == 200) return res->body;
        last_error = res ? fmt::format("HTTP {}", res->status) : httplib::to_string(res.error());
        if (res && res->status != 429 && res->status < 500) break;
        if (attempt < config_.retry.max_attempts) sleeper_(config_.retry.ceiling(attempt - 1));
    }
    throw BackendError(BackendErrorKind::RetriesExhausted, fmt::format("OSM request to {} failed: {}", base, last_error));
}

ContextBlock ContextProvider::fetch_live(const GeoPoint& point) {
    ContextBlock block;
    block.source = ContextSource::Live;

    auto reverse = split_url(config_.reverse_base);
    if (reverse.path == "/") reverse.path.clear();
    auto rev = nlohmann::json::parse(
        http_get(reverse.scheme_host_port, fmt::format("{}/reverse?format=jsonv2&zoom=18&lat={:.6f}&lon={:.6f}",
                                                       reverse.path, point.lat(), point.lon())),
        nullptr, false);
    if (rev.is_object() && rev.contains("display_name") && rev["display_name"].is_string()) {
        block.address = rev["display_name"].get<std::string>();
    } else {
        block.address = "Unknown location";
    }

    const auto overpass = split_url(config_.overpass_url);
    const auto query = fmt::format("[out:json][timeout:25];node(around:{:.0f},{:.6f},{:.6f})[place][name];out body {};",
                                   config_.radius_km * 1000.0, point.lat(), point.lon(), config_.nearby_count * 5);
    auto places = nlohmann::json::parse(
        http_get(overpass.scheme_host_port, overpass.path + "?data=" + httplib::detail::encode_query_param(query)), nullptr,
        false);
    if (places.is_object() && places.contains("elements") && places["elements"].is_array()) {
        for (const auto& el : places["elements"]) {
            if (!el.contains("lat") || !el.contains("lon") || !el.contains("tags")) continue;
            const auto& tags = el["tags"];
            if (!tags.contains("name") || !tags["name"].is_string()) continue;
            const double plat = el["lat"].get<double>();
            const double plon = el["lon"].get<double>();
            block.nearby.push_back({tags["name"].get<std::string>(),
                                    haversine_km(point.lat(), point.lon(), plat, plon),
                                    std::string(compass16(bearing_deg(point.lat(), point.lon(), plat, plon)))});
        }
    }
    block.normalize(config_.nearby_count);
    return block;
}

}  // namespace geosr
