#pragma once

#include "geosr/cli.hpp"
#include "geosr/csv.hpp"
#include "geosr/mock_backend.hpp"
#include "geosr/orchestrator.hpp"

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag = "geosr") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() / (tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline geosr::Dataset synthetic_dataset(std::size_t n, std::uint64_t seed) {
    geosr::SynthOptions o;
    o.n = n;
    o.seed = seed;
    auto data = geosr::synthesize(o);
    return data.dataset.with_covariates(data.covariates);
}

// Reference mock: truth field + noise 1.5, IDW refine, anchor-linked bias.
inline geosr::MockConfig reference_mock(const geosr::Dataset& ds, std::uint64_t seed) {
    geosr::MockConfig m;
    m.noise_sd = 1.5;
    m.seed = seed;
    m.anchor_bias = 1.0;
    m.anchor_tilt = geosr::anchor_tilts(ds);
    return m;
}

struct MockRun {
    geosr::Dataset dataset;
    geosr::MockBackend backend;
    geosr::ContextProvider context{geosr::ContextConfig{}};
    geosr::PromptSet prompts = geosr::PromptSet::builtin();
    geosr::TaskContext task{"average annual temperature", ""};

    MockRun(geosr::Dataset ds, geosr::MockConfig mock) : dataset(std::move(ds)), backend(std::move(mock)) {}

    geosr::Orchestrator orchestrator(const geosr::RunConfig& config, const fs::path& dir) {
        return geosr::Orchestrator(dataset, task, config, backend, context, prompts, dir);
    }
    geosr::RunResult run(const geosr::RunConfig& config, const fs::path& dir, const geosr::RunOptions& o = {}) {
        return orchestrator(config, dir).run(o);
    }
    geosr::RunResult resume(const geosr::RunConfig& config, const fs::path& dir, const geosr::RunOptions& o = {}) {
        return orchestrator(config, dir).resume(o);
    }
};

inline std::string slurp(const fs::path& p) { return geosr::csv::read_file(p); }

}  // namespace testsupport
