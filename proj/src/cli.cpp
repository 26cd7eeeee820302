#include "geosr/cli.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"
#include "geosr/evaluation.hpp"
#include "geosr/pipeline.hpp"
#include "geosr/rng.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <fmt/format.h>
#include <iostream>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace geosr {

namespace {

struct BioShape {
    double base;
    double cos_amp;
    double sin_amp;
};

// value = base + cos_amp*cos(lat) + sin_amp*sin(lat)
constexpr std::array<BioShape, kCovariateCount> kBioShapes{{
    {-18, 44, 0},    {6, 6, 0},      {20, 50, 0},    {1500, -1300, 0}, {2, 32, 0},
    {-40, 60, 0},    {40, -20, 0},   {-10, 36, 0},   {-25, 48, 0},     {2, 28, 0},
    {-38, 62, 0},    {100, 2000, 150}, {15, 280, 20}, {5, 40, 5},      {40, 40, 0},
    {40, 700, 50},   {15, 120, 10},  {30, 450, 40},  {25, 250, 30},
}};

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

}  // namespace

CovariateRow synthetic_covariates(double lat) {
    const double phi = lat * std::numbers::pi / 180.0;
    CovariateRow row;
    for (std::size_t j = 0; j < kCovariateCount; ++j) {
        const auto& s = kBioShapes[j];
        row.set(CovariateCode::from_index(j), round_to(s.base + s.cos_amp * std::cos(phi) + s.sin_amp * std::sin(phi), 100));
    }
    return row;
}

SynthData synthesize(const SynthOptions& options) {
    if (options.n < 2) throw ConfigError(fmt::format("synth-data needs n >= 2, got {}", options.n));
    if (!(options.anchor_roughness >= 0.0)) throw ConfigError("anchor roughness must be >= 0");
    std::mt19937_64 gen(options.seed);
    const int width = static_cast<int>(std::to_string(options.n).size());
    std::vector<GeoPoint> points;
    std::vector<double> targets, anchor;
    CovariateTable covariates;
    for (std::size_t i = 0; i < options.n; ++i) {
        const double lat = round_to(rng::uniform(gen, -90.0, 90.0), 1e4);
        const double lon = round_to(rng::uniform(gen, -180.0, 180.0), 1e4);
        const double z = rng::standard_normal(gen);
        auto id = fmt::format("p{:0{}}", i + 1, width);
        covariates[id] = synthetic_covariates(lat);
        points.emplace_back(std::move(id), lat, lon);
        targets.push_back(options.truth.evaluate(lat, lon));
        anchor.push_back(std::max(options.anchor.evaluate(lat, lon), 1.0) * std::exp(options.anchor_roughness * z));
    }
    Dataset dataset(std::move(points), std::move(targets), std::move(anchor));
    return {std::move(dataset), std::move(covariates)};
}

namespace {

struct RunFlags {
    std::string config;
    std::vector<std::string> sets;
    std::string dataset;
    std::string covariates;
    std::string run_dir;
    int rounds = 0;
    std::uint64_t seed = 0;
    std::string backend;
    std::string topic;
    std::size_t concurrency = 1;
    int stop_after = -1;

    CLI::Option* rounds_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* concurrency_opt = nullptr;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("-c,--config", f.config, "INI config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", f.sets, "Override a config key, section.key=value (repeatable)");
    cmd->add_option("--dataset", f.dataset, "Dataset CSV (paths.dataset)");
    cmd->add_option("--covariates", f.covariates, "Covariate CSV (paths.covariates)");
    cmd->add_option("--run-dir", f.run_dir, "Run directory (paths.run_dir)");
    f.rounds_opt = cmd->add_option("-K,--rounds", f.rounds, "Refinement rounds (run.rounds)");
    f.seed_opt = cmd->add_option("--seed", f.seed, "Seed (run.seed)");
    cmd->add_option("--backend", f.backend, "mock or live (run.backend)");
    cmd->add_option("--topic", f.topic, "Prediction topic (task.topic)");
    f.concurrency_opt = cmd->add_option("-j,--concurrency", f.concurrency, "Worker threads (run.concurrency)");
    cmd->add_option("--stop-after", f.stop_after, "Stop once round k is written, leaving the run resumable")
        ->group("");
}

std::string absolute_str(const std::string& p) {
    return std::filesystem::absolute(p).lexically_normal().string();
}

CliConfig build_config(const RunFlags& f) {
    CliConfig config = f.config.empty() ? CliConfig{} : load_config(f.config);
    if (f.config.empty()) absolutize_paths(config, std::filesystem::current_path());
    if (!f.dataset.empty()) set_option(config, "paths.dataset", absolute_str(f.dataset));
    if (!f.covariates.empty()) set_option(config, "paths.covariates", absolute_str(f.covariates));
    if (!f.run_dir.empty()) set_option(config, "paths.run_dir", absolute_str(f.run_dir));
    if (f.rounds_opt->count()) set_option(config, "run.rounds", std::to_string(f.rounds));
    if (f.seed_opt->count()) set_option(config, "run.seed", std::to_string(f.seed));
    if (f.concurrency_opt->count()) set_option(config, "run.concurrency", std::to_string(f.concurrency));
    if (!f.backend.empty()) set_option(config, "run.backend", f.backend);
    if (!f.topic.empty()) set_option(config, "task.topic", f.topic);
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects section.key=value, got '{}'", s));
        set_option(config, s.substr(0, eq), s.substr(eq + 1));
    }
    return config;
}

RunOptions run_options(const RunFlags& f) {
    RunOptions o;
    if (f.stop_after >= 0) o.stop_after_round = f.stop_after;
    return o;
}

void report_result(const RunResult& r, const std::filesystem::path& dir) {
    if (r.interrupted) {
        fmt::print("stopped after round {} in {}; continue with `geosr resume {}`\n", r.last_round, dir.string(),
                   dir.string());
    } else if (r.stopped_early) {
        fmt::print("converged early; rounds copied forward to {} in {}\n", r.last_round, dir.string());
    } else {
        fmt::print("completed round {} in {}\n", r.last_round, dir.string());
    }
}

std::filesystem::path dataset_for(const std::filesystem::path& run_dir, const std::string& flag) {
    if (!flag.empty()) return flag;
    const auto snapshot = rundir::config_file(run_dir);
    if (!std::filesystem::exists(snapshot)) {
        throw ConfigError(fmt::format("{} has no config.snapshot; pass --dataset", run_dir.string()));
    }
    return load_config(snapshot).dataset;
}

void setup_logging(const std::string& level) {
    auto logger = spdlog::get("geosr");
    if (!logger) {
        logger = spdlog::stderr_color_mt("geosr");
        spdlog::set_default_logger(logger);
    }
    auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off") throw ConfigError(fmt::format("unknown log level '{}'", level));
    spdlog::set_level(lvl);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Self-refining geospatial prediction with LLM agents"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic dataset and covariate table");
    SynthOptions synth_opts;
    std::string truth_spec, anchor_spec, out_dataset = "dataset.csv", out_covariates = "covariates.csv";
    synth->add_option("-n,--n", synth_opts.n, "Number of points")->required();
    synth->add_option("--seed", synth_opts.seed, "Seed");
    synth->add_option("--truth-field", truth_spec, "Truth field, k=v,... (defaults apply per key)");
    synth->add_option("--anchor-field", anchor_spec, "Anchor field, k=v,...");
    synth->add_option("--anchor-roughness", synth_opts.anchor_roughness, "Log-normal spread of the anchor");
    synth->add_option("--out", out_dataset, "Dataset CSV to write");
    synth->add_option("--out-covariates", out_covariates, "Covariate CSV to write");

    // run
    auto* run = app.add_subcommand("run", "Predict and refine over every point");
    RunFlags run_flags;
    add_run_flags(run, run_flags);

    // resume
    auto* resume = app.add_subcommand("resume", "Continue a run directory after its last complete round");
    std::string resume_dir;
    int resume_stop = -1;
    resume->add_option("run_dir", resume_dir, "Run directory")->required();
    resume->add_option("--stop-after", resume_stop, "Stop once round k is written")->group("");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Per-round Spearman, bias, MAD and answer rate");
    std::string eval_dir, eval_dataset, eval_csv;
    evaluate->add_option("run_dir", eval_dir, "Run directory")->required();
    evaluate->add_option("--dataset", eval_dataset, "Dataset CSV (default: from config.snapshot)");
    evaluate->add_option("--csv", eval_csv, "Also write the report CSV here");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run ablation variants side by side");
    RunFlags ablate_flags;
    std::vector<std::string> variants;
    add_run_flags(ablate, ablate_flags);
    ablate->add_option("--variant", variants, "full, no_near10, no_ptsel, no_extvars or all (repeatable)")
        ->required();

    // export-map
    auto* export_map = app.add_subcommand("export-map", "Export a round as a rank map (CSV or GeoJSON)");
    std::string map_dir, map_dataset, map_format = "csv", map_out;
    int map_round = -1;
    export_map->add_option("run_dir", map_dir, "Run directory")->required();
    export_map->add_option("--round", map_round, "Round to export (default: last complete)");
    export_map->add_option("--dataset", map_dataset, "Dataset CSV (default: from config.snapshot)");
    export_map->add_option("--format", map_format, "csv or geojson")->check(CLI::IsMember({"csv", "geojson"}));
    export_map->add_option("-o,--out", map_out, "Output file")->required();

    auto* registry = app.add_subcommand("dump-registry", "Print the bioclimatic covariate registry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        setup_logging(log_level);

        if (synth->parsed()) {
            if (!truth_spec.empty()) synth_opts.truth = FieldSpec::parse(truth_spec);
            if (!anchor_spec.empty()) synth_opts.anchor = FieldSpec::parse(anchor_spec);
            auto data = synthesize(synth_opts);
            csv::write_file_atomic(out_dataset, format_dataset(data.dataset, false));
            save_covariates(out_covariates, data.covariates);
            fmt::print("wrote {} points to {} and {}\n", data.dataset.size(), out_dataset, out_covariates);
        } else if (run->parsed()) {
            auto config = build_config(run_flags);
            report_result(run_from_config(config, run_options(run_flags)), config.run_dir);
        } else if (resume->parsed()) {
            RunOptions o;
            if (resume_stop >= 0) o.stop_after_round = resume_stop;
            report_result(resume_run_dir(resume_dir, o), resume_dir);
        } else if (evaluate->parsed()) {
            const auto dataset = load_dataset(dataset_for(eval_dir, eval_dataset));
            const auto reports = evaluate_run(eval_dir, dataset);
            fmt::print("{}", format_reports_table(reports));
            if (!eval_csv.empty()) csv::write_file_atomic(eval_csv, format_reports_csv(reports));
        } else if (ablate->parsed()) {
            auto base = build_config(ablate_flags);
            std::vector<AblationVariant> chosen;
            for (const auto& v : variants) {
                if (v == "all") {
                    chosen = {AblationVariant::Full, AblationVariant::NoNear10, AblationVariant::NoPointSelect,
                              AblationVariant::NoExtVars};
                    break;
                }
                chosen.push_back(ablation_config(base.run, v).variant);
            }
            std::string summary = fmt::format("{:<11}  {:>5}  {:>9}  {:>9}  {:>7}\n", "variant", "round", "spearman",
                                              "bias", "answer");
            for (auto v : chosen) {
                auto config = base;
                config.run = ablation_config(base.run, v);
                config.run_dir = base.run_dir / std::string(to_string(v));
                auto result = run_from_config(config, run_options(ablate_flags));
                const auto dataset = load_inputs(config);
                const auto r = evaluate_round(*result.final_state, dataset);
                summary += fmt::format("{:<11}  {:>5}  {:>9.4f}  {:>9.4f}  {:>7.3f}\n", to_string(v), result.last_round,
                                       r.spearman, r.bias, r.answer_rate);
            }
            fmt::print("{}", summary);
        } else if (export_map->parsed()) {
            const auto dataset = load_dataset(dataset_for(map_dir, map_dataset));
            int round = map_round;
            if (round < 0) {
                auto last = rundir::last_complete_round(map_dir);
                if (!last) throw DataError(fmt::format("{}: no round files", map_dir));
                round = *last;
            }
            const auto file = rundir::round_file(map_dir, round);
            if (!std::filesystem::exists(file)) throw DataError(fmt::format("{} does not exist", file.string()));
            export_rank_map(file, dataset, *parse_map_format(map_format), map_out);
            fmt::print("wrote round {} rank map to {}\n", round, map_out);
        } else if (registry->parsed()) {
            fmt::print("{}", CovariateRegistry::worldclim().dump());
        }
        std::fflush(stdout);
        return exit_code::ok;
    } catch (const ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return exit_code::config;
    } catch (const DataError& e) {
        spdlog::error("data: {}", e.what());
        return exit_code::data;
    } catch (const BackendError& e) {
        spdlog::error("backend ({}): {}", to_string(e.kind()), e.what());
        return exit_code::backend;
    } catch (const ResumeError& e) {
        spdlog::error("resume: {}", e.what());
        return exit_code::resume;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return exit_code::failure;
    }
}

}  // namespace geosr
