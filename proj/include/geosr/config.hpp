#pragma once

#include "geosr/agents.hpp"
#include "geosr/context.hpp"
#include "geosr/live_backend.hpp"
#include "geosr/mock_backend.hpp"
#include "geosr/orchestrator.hpp"
#include "geosr/prompts.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace geosr {

// Everything a run needs, as read from an INI file plus flag overrides.
// The API key is never part of it; it comes from GEOSR_API_KEY.
struct CliConfig {
    RunConfig run;
    std::string topic = "average annual temperature";
    std::string scale_hint;

    LiveConfig live;
    double requests_per_second = 2.0;
    MockConfig mock;
    ContextConfig context;

    std::filesystem::path dataset;
    std::filesystem::path covariates;
    std::filesystem::path run_dir = "runs/default";
    PromptPaths prompts;

    CliConfig();
};

// Sets one option by "section.key". Throws ConfigError on unknown keys or
// unparseable values.
void set_option(CliConfig& config, std::string_view dotted_key, std::string_view value);

// Every option with its current value, in file order.
std::vector<std::pair<std::string, std::string>> config_entries(const CliConfig& config);

// INI text with every option written out.
std::string format_config(const CliConfig& config);
CliConfig parse_config(std::string_view text, std::string_view source_name = "<config>");
CliConfig load_config(const std::filesystem::path& path);

// Resolves relative paths against `base` so a snapshot works from any cwd.
void absolutize_paths(CliConfig& config, const std::filesystem::path& base);

}  // namespace geosr
