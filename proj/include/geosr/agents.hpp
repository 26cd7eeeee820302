#pragma once

#include "geosr/backend.hpp"
#include "geosr/context.hpp"
#include "geosr/covariates.hpp"
#include "geosr/geo.hpp"
#include "geosr/prompts.hpp"
#include "geosr/score.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace geosr {

struct TaskContext {
    std::string topic;
    std::string scale_hint;

    TaskContext(std::string topic, std::string scale_hint);
};

// Reference locations for one target: the nearest-neighbor ring plus
// agent-chosen farther points. Disjoint, never containing the target.
struct ReferenceSet {
    std::vector<std::string> mandatory;
    std::vector<std::string> extra;

    std::vector<std::string> all() const;
    friend bool operator==(const ReferenceSet&, const ReferenceSet&) = default;
};

class RefineDecision {
public:
    static RefineDecision keep() { return RefineDecision(std::nullopt); }
    static RefineDecision update(Score value);

    bool is_update() const noexcept { return update_.has_value(); }
    const Score& value() const { return update_.value(); }
    std::string str() const;  // "KEEP" / "UPDATE: x.x"

    friend bool operator==(const RefineDecision&, const RefineDecision&) = default;

private:
    explicit RefineDecision(std::optional<Score> update) : update_(std::move(update)) {}
    std::optional<Score> update_;
};

// ---------------------------------------------------------------------------
// Reply parsers. Total over arbitrary input: they never throw.

// "SCORE: x.x" preferred; otherwise the first number in [0, 9.9] unless the
// reply reads as a refusal. Re-quantized to one decimal.
Score parse_score_reply(std::string_view text);

struct VariableReply {
    CovariateSet codes;
    std::vector<std::string> warnings;
};
VariableReply parse_variable_reply(std::string_view text, std::size_t d_max);

struct PointReply {
    std::vector<std::string> ids;
    std::vector<std::string> warnings;
};
// Keeps the first `p_far` distinct ids that appear in `menu_ids`, in reply
// order. The target id and anything outside the menu are dropped.
PointReply parse_point_reply(std::string_view text, const std::vector<std::string>& menu_ids,
                             std::string_view target_id, std::size_t p_far);

struct RefineReply {
    RefineDecision decision = RefineDecision::keep();
    std::vector<std::string> warnings;
};
// "KEEP" or "UPDATE: x.x". Unparseable and out-of-range updates are Keep.
RefineReply parse_refine_reply(std::string_view text);

// ---------------------------------------------------------------------------
// Agents

// Collects one audit record per backend call made on behalf of a point.
struct CallRecorder {
    int round = 0;
    std::string point_id;
    std::vector<nlohmann::json> records;

    std::string request_id(AgentRole role) const;
};

struct PointSelectOptions {
    std::size_t k_near = 10;
    std::size_t p_far = 5;
    std::size_t menu_size = 30;
    bool include_mandatory = true;  // false: "without nearest points" ablation
    bool use_agent = true;          // false: "without agent-selected points" ablation
};

struct ReferenceInput {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    double distance_km = 0.0;
    Score score = Score::refused();
    CovariateRow covariates;
};

struct PointSelection {
    ReferenceSet refs;
    // Distance-ordered neighbors of the target, used to resolve reference
    // distances without a second scan.
    std::vector<Neighbor> ranked;
};

class Agents {
public:
    Agents(Backend& backend, const PromptSet& prompts, const CovariateRegistry& registry = CovariateRegistry::worldclim(),
           std::size_t d_max = 5);

    Score predict(const GeoPoint& point, const ContextBlock& context, const TaskContext& task,
                  CallRecorder* recorder = nullptr) const;

    CovariateSet select_variables(const GeoPoint& point, const TaskContext& task,
                                  CallRecorder* recorder = nullptr) const;

    PointSelection select_points(const GeoPoint& point, const TaskContext& task, const SpatialIndex& index,
                                 const PointSelectOptions& options, CallRecorder* recorder = nullptr) const;

    RefineDecision refine(const GeoPoint& point, const Score& current, const TaskContext& task,
                          const std::vector<ReferenceInput>& refs, const CovariateRow& target_covariates,
                          CallRecorder* recorder = nullptr) const;

    // Prompt renderers, exposed for determinism and audit tests.
    std::string render_predict(const GeoPoint& point, const ContextBlock& context, const TaskContext& task) const;
    std::string render_variable_select(const GeoPoint& point, const TaskContext& task) const;
    std::string render_point_select(const GeoPoint& point, const TaskContext& task, const SpatialIndex& index,
                                    const std::vector<Neighbor>& mandatory, const std::vector<Neighbor>& menu,
                                    std::size_t p_far) const;
    std::string render_refine(const GeoPoint& point, const Score& current, const TaskContext& task,
                              const std::vector<ReferenceInput>& refs, const CovariateRow& target_covariates) const;

private:
    std::optional<BackendResponse> call(AgentRole role, std::string prompt, nlohmann::json payload,
                                        CallRecorder* recorder) const;
    std::string format_covariates_inline(const CovariateRow& row) const;

    Backend& backend_;
    const PromptSet& prompts_;
    const CovariateRegistry& registry_;
    std::size_t d_max_;
};

nlohmann::json point_json(const GeoPoint& point);
nlohmann::json covariates_json(const CovariateRow& row);

}  // namespace geosr
