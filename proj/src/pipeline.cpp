#include "geosr/pipeline.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <cstdlib>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace geosr {

Dataset load_inputs(const CliConfig& config) {
    if (config.dataset.empty()) throw ConfigError("paths.dataset is not set");
    auto dataset = load_dataset(config.dataset);
    if (!config.covariates.empty()) dataset = dataset.with_covariates(load_covariates(config.covariates));
    return dataset;
}

std::unique_ptr<Backend> make_backend(const CliConfig& config, const Dataset& dataset) {
    if (config.run.backend == BackendMode::Mock) {
        auto mock = config.mock;
        mock.seed = config.run.seed;
        if (mock.anchor_bias != 0.0) mock.anchor_tilt = anchor_tilts(dataset);
        return std::make_unique<MockBackend>(std::move(mock));
    }
    auto live = config.live;
    if (live.endpoint.empty()) throw ConfigError("backend.endpoint is required for the live backend");
    if (live.model.empty()) throw ConfigError("backend.model is required for the live backend");
    const char* key = std::getenv("GEOSR_API_KEY");
    if (!key || !*key) throw ConfigError("GEOSR_API_KEY is not set");
    live.api_key = key;
    return std::make_unique<LiveBackend>(std::move(live), std::make_shared<RateLimiter>(config.requests_per_second));
}

namespace {

RunResult start(const CliConfig& config, const RunOptions& options, bool resuming) {
    config.run.validate();
    const auto dataset = load_inputs(config);
    auto backend = make_backend(config, dataset);
    auto context_config = config.context;
    apply_osm_env(context_config);
    ContextProvider context(context_config);
    const auto prompts = PromptSet::load(config.prompts);
    TaskContext task(config.topic, config.scale_hint);

    Orchestrator orchestrator(dataset, task, config.run, *backend, context, prompts, config.run_dir);
    if (resuming) return orchestrator.resume(options);

    std::filesystem::create_directories(config.run_dir);
    if (rundir::last_complete_round(config.run_dir)) {
        throw ResumeError(fmt::format("{} already holds a run; use resume", config.run_dir.string()));
    }
    csv::write_file_atomic(rundir::config_file(config.run_dir), format_config(config));
    return orchestrator.run(options);
}

}  // namespace

RunResult run_from_config(const CliConfig& config, const RunOptions& options) {
    return start(config, options, false);
}

RunResult resume_run_dir(const std::filesystem::path& run_dir, const RunOptions& options) {
    const auto snapshot = rundir::config_file(run_dir);
    if (!std::filesystem::exists(snapshot)) {
        throw ResumeError(fmt::format("{} has no config.snapshot", run_dir.string()));
    }
    auto config = load_config(snapshot);
    config.run_dir = std::filesystem::absolute(run_dir).lexically_normal();
    spdlog::debug("resuming with snapshot {}", snapshot.string());
    return start(config, options, true);
}

}  // namespace geosr
