#pragma once

#include "geosr/config.hpp"
#include "geosr/orchestrator.hpp"

#include <filesystem>
#include <memory>

namespace geosr {

// Dataset from paths.dataset, with covariates merged from paths.covariates
// when that is set.
Dataset load_inputs(const CliConfig& config);

// Mock backends are seeded from run.seed and read anchor tilts from the
// dataset. Live backends need GEOSR_API_KEY.
std::unique_ptr<Backend> make_backend(const CliConfig& config, const Dataset& dataset);

// Fresh run into config.run_dir; writes config.snapshot first.
RunResult run_from_config(const CliConfig& config, const RunOptions& options = {});

// Continues a run directory from its own config.snapshot.
RunResult resume_run_dir(const std::filesystem::path& run_dir, const RunOptions& options = {});

}  // namespace geosr
