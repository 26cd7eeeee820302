#pragma once

#include "geosr/backend.hpp"
#include "geosr/field.hpp"
#include "geosr/geo.hpp"

#include <cstdint>
#include <atomic>
#include <map>
#include <string>

namespace geosr {

enum class MockRefinePolicy { AlwaysKeep, InverseDistance };

std::string_view to_string(MockRefinePolicy policy);
std::optional<MockRefinePolicy> parse_mock_refine_policy(std::string_view text);

struct MockConfig {
    FieldSpec field = default_truth_field();
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    // Fraction of Predict calls answered with a refusal, chosen per point id.
    double refusal_rate = 0.0;
    MockRefinePolicy refine = MockRefinePolicy::InverseDistance;
    double idw_power = 2.0;
    // Weight of the neighbor estimate against the current score.
    double blend = 0.5;
    std::string variable_reply = "bio1, bio12";
    // Predict over-rates places with a high anchor value: the reply is
    // shifted by anchor_bias * anchor_tilt[id], tilt in [-1, 1].
    double anchor_bias = 0.0;
    std::map<std::string, double> anchor_tilt;
    // Verbatim replies that override the simulated behaviour per role.
    std::map<AgentRole, std::string> fixed_replies;
};

// Deterministic oracle backend. The reply is a pure function of the request
// payload and the config; it never reads the prompt text.
//
// Payloads it understands (all produced by the agents module):
//   predict          {"point": {"id", "lat", "lon"}}
//   variable_select  {"point": ...}
//   point_select     {"point": ..., "menu": [{"id", ...}], "p_far": n}
//   refine           {"point": ..., "current": "x.x"|"REFUSED",
//                     "refs": [{"id", "distance_km", "score"}]}
class MockBackend final : public Backend {
public:
    explicit MockBackend(MockConfig config) : config_(std::move(config)) {}

    BackendResponse invoke(const BackendRequest& request) override;
    std::string name() const override { return "mock"; }
    const MockConfig& config() const noexcept { return config_; }
    std::size_t calls() const noexcept { return calls_.load(); }

    // Per-point noise seed used for Predict replies.
    static std::uint64_t point_seed(std::uint64_t seed, std::string_view point_id);

private:
    std::string predict_reply(const nlohmann::json& payload) const;
    std::string point_select_reply(const nlohmann::json& payload) const;
    std::string refine_reply(const nlohmann::json& payload) const;

    MockConfig config_;
    std::atomic<std::size_t> calls_{0};
};

// Centered anchor percentile per id, scaled to [-1, 1]; ties share a value.
std::map<std::string, double> anchor_tilts(const Dataset& dataset);

}  // namespace geosr
