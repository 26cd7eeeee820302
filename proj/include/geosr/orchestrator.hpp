#pragma once

#include "geosr/agents.hpp"
#include "geosr/backend.hpp"
#include "geosr/context.hpp"
#include "geosr/geo.hpp"
#include "geosr/prompts.hpp"
#include "geosr/score.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace geosr {

enum class BackendMode { Live, Mock };
std::string_view to_string(BackendMode mode);
std::optional<BackendMode> parse_backend_mode(std::string_view text);

enum class AblationVariant { Full, NoNear10, NoPointSelect, NoExtVars };
std::string_view to_string(AblationVariant variant);
std::optional<AblationVariant> parse_ablation_variant(std::string_view text);

struct RunConfig {
    int rounds = 3;  // K
    std::size_t k_near = 10;
    std::size_t p_far = 5;
    std::size_t d_max = 5;
    std::size_t menu_size = 30;
    std::size_t concurrency = 4;
    std::uint64_t seed = 0;
    BackendMode backend = BackendMode::Mock;
    ContextMode context = ContextMode::Synthetic;
    bool early_stop = false;
    // Reuse round-1 variable and point choices in later rounds instead of
    // re-invoking both selection agents every round.
    bool cache_selections = false;

    // Channels switched off by the ablation variants.
    bool use_nearest = true;
    bool use_point_select = true;
    bool use_covariates = true;
    AblationVariant variant = AblationVariant::Full;

    // Throws ConfigError when an invariant is violated.
    void validate() const;
};

// Immutable snapshot of every point's score after round k, index-aligned
// with the dataset.
class RoundState {
public:
    RoundState(int round, std::vector<Score> scores,
               std::chrono::system_clock::time_point created = std::chrono::system_clock::now());

    int round() const noexcept { return round_; }
    const std::vector<Score>& scores() const noexcept { return scores_; }
    const Score& at(std::size_t i) const { return scores_.at(i); }
    std::size_t size() const noexcept { return scores_.size(); }
    std::chrono::system_clock::time_point created() const noexcept { return created_; }

private:
    int round_;
    std::vector<Score> scores_;
    std::chrono::system_clock::time_point created_;
};

using RoundPtr = std::shared_ptr<const RoundState>;

// Hooks for instrumentation. Every read of a prior-round score during
// refinement is reported, with the round it came from.
class RunObserver {
public:
    virtual ~RunObserver() = default;
    virtual void on_snapshot_read(int /*round*/, int /*snapshot_round*/, std::size_t /*target*/,
                                  std::size_t /*source*/) {}
    virtual void on_round_written(const RoundState& /*state*/) {}
};

struct RunOptions {
    // Return after this round is persisted, as if the process died.
    std::optional<int> stop_after_round;
    RunObserver* observer = nullptr;
};

struct RunResult {
    RoundPtr final_state;
    int last_round = 0;
    bool stopped_early = false;
    bool interrupted = false;
};

// Run directory layout
namespace rundir {
std::filesystem::path round_file(const std::filesystem::path& dir, int k);
std::filesystem::path refsets_file(const std::filesystem::path& dir, int k);
std::filesystem::path calls_file(const std::filesystem::path& dir);
std::filesystem::path fingerprint_file(const std::filesystem::path& dir);
std::filesystem::path config_file(const std::filesystem::path& dir);
// Highest k such that round files 0..k all exist, or nullopt.
std::optional<int> last_complete_round(const std::filesystem::path& dir);
}  // namespace rundir

std::string dataset_fingerprint(const Dataset& dataset);

std::string format_round(const RoundState& state, const Dataset& dataset);
RoundState load_round(const std::filesystem::path& path, const Dataset& dataset, int round);

struct RefsetRow {
    std::string id;
    ReferenceSet refs;
    CovariateSet variables;
};
std::vector<RefsetRow> load_refsets(const std::filesystem::path& path);

class Orchestrator {
public:
    Orchestrator(const Dataset& dataset, TaskContext task, RunConfig config, Backend& backend,
                 ContextProvider& context, const PromptSet& prompts, std::filesystem::path run_dir);

    // Fresh run: round 0 predictions, then refinement rounds 1..K.
    RunResult run(const RunOptions& options = {});
    // Continues from the last complete round on disk. A finished run is a
    // no-op. Throws ResumeError on fingerprint mismatch or corrupt rounds.
    RunResult resume(const RunOptions& options = {});

private:
    struct PointOutcome {
        Score score = Score::refused();
        bool updated = false;
        ReferenceSet refs;
        CovariateSet variables;
        std::vector<nlohmann::json> records;
    };

    RunResult execute(RoundPtr start, const RunOptions& options);
    RoundPtr predict_round();
    std::pair<RoundPtr, std::size_t> refine_round(int round, const RoundPtr& previous, const RunOptions& options);
    void persist(const RoundState& state, const std::vector<PointOutcome>* outcomes, const RunOptions& options);
    void replicate_forward(const RoundState& from, const RunOptions& options);

    const Dataset& dataset_;
    TaskContext task_;
    RunConfig config_;
    Backend& backend_;
    ContextProvider& context_;
    const PromptSet& prompts_;
    std::filesystem::path dir_;
    SpatialIndex index_;
    Agents agents_;
    std::optional<std::vector<PointOutcome>> cached_selections_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first
// exception after all workers have stopped.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace geosr
