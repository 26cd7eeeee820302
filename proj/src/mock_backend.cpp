#include "geosr/mock_backend.hpp"

#include "geosr/error.hpp"
#include "geosr/evaluation.hpp"
#include "geosr/rng.hpp"
#include "geosr/score.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace geosr {

std::string_view to_string(MockRefinePolicy policy) {
    switch (policy) {
    case MockRefinePolicy::AlwaysKeep: return "keep";
    case MockRefinePolicy::InverseDistance: return "idw";
    }
    return "unknown";
}

std::optional<MockRefinePolicy> parse_mock_refine_policy(std::string_view text) {
    if (text == "keep") return MockRefinePolicy::AlwaysKeep;
    if (text == "idw") return MockRefinePolicy::InverseDistance;
    return std::nullopt;
}

std::uint64_t MockBackend::point_seed(std::uint64_t seed, std::string_view point_id) {
    return rng::mix(seed, rng::fnv1a(point_id));
}

BackendResponse MockBackend::invoke(const BackendRequest& request) {
    ++calls_;
    if (auto it = config_.fixed_replies.find(request.role); it != config_.fixed_replies.end()) {
        return {it->second, 1, 0.0};
    }
    try {
        switch (request.role) {
        case AgentRole::Predict: return {predict_reply(request.payload), 1, 0.0};
        case AgentRole::VariableSelect: return {config_.variable_reply, 1, 0.0};
        case AgentRole::PointSelect: return {point_select_reply(request.payload), 1, 0.0};
        case AgentRole::Refine: return {refine_reply(request.payload), 1, 0.0};
        }
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendErrorKind::MalformedReply, fmt::format("mock: bad payload: {}", e.what()));
    }
    throw BackendError(BackendErrorKind::MalformedReply, "mock: unknown role");
}

std::string MockBackend::predict_reply(const nlohmann::json& payload) const {
    const auto& point = payload.at("point");
    const auto id = point.at("id").get<std::string>();
    const auto seed = point_seed(config_.seed, id);
    if (config_.refusal_rate > 0.0) {
        std::mt19937_64 gen(rng::mix(seed, 0x7265667573616cULL));
        if (rng::uniform01(gen) < config_.refusal_rate) return "I cannot provide that rating.";
    }
    double shift = 0.0;
    if (config_.anchor_bias != 0.0) {
        if (auto it = config_.anchor_tilt.find(id); it != config_.anchor_tilt.end()) shift = config_.anchor_bias * it->second;
    }
    const double score = mock_field_score(point.at("lat").get<double>(), point.at("lon").get<double>(),
                                          config_.field, config_.noise_sd, seed, shift);
    return fmt::format("SCORE: {:.1f}", score);
}

std::string MockBackend::point_select_reply(const nlohmann::json& payload) const {
    const auto& menu = payload.at("menu");
    const auto p = payload.at("p_far").get<std::size_t>();
    const std::size_t m = menu.size();
    if (m == 0 || p == 0) return "NONE";
    // evenly spaced picks across the distance-ordered menu
    std::string out;
    const std::size_t picks = std::min(p, m);
    for (std::size_t i = 0; i < picks; ++i) {
        const std::size_t at = i * m / picks;
        if (!out.empty()) out += ", ";
        out += menu.at(at).at("id").get<std::string>();
    }
    return out;
}

std::string MockBackend::refine_reply(const nlohmann::json& payload) const {
    if (config_.refine == MockRefinePolicy::AlwaysKeep) return "KEEP";
    double weighted = 0.0;
    double weights = 0.0;
    for (const auto& ref : payload.at("refs")) {
        auto score = Score::parse_str(ref.at("score").get<std::string>());
        if (!score || score->is_refused()) continue;
        const double d = std::max(ref.at("distance_km").get<double>(), 1.0);
        const double w = 1.0 / std::pow(d, config_.idw_power);
        weighted += w * score->value();
        weights += w;
    }
    if (weights <= 0.0) return "KEEP";
    const double estimate = weighted / weights;
    auto current = Score::parse_str(payload.at("current").get<std::string>());
    double proposal = estimate;
    if (current && current->has_value()) {
        proposal = (1.0 - config_.blend) * current->value() + config_.blend * estimate;
    }
    auto next = Score::from_value(std::clamp(proposal, 0.0, 9.9));
    if (!next || (current && *current == *next)) return "KEEP";
    return "UPDATE: " + next->str();
}

std::map<std::string, double> anchor_tilts(const Dataset& dataset) {
    const auto ranks = average_ranks(dataset.anchor());
    const double n = static_cast<double>(dataset.size());
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out[dataset.point(i).id()] = 2.0 * ((ranks[i] - 0.5) / n - 0.5);
    }
    return out;
}

}  // namespace geosr
