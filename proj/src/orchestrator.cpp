#include "geosr/orchestrator.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <fmt/format.h>
#include <numeric>
#include <sstream>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <thread>

namespace geosr {

std::string_view to_string(BackendMode mode) {
    return mode == BackendMode::Live ? "live" : "mock";
}

std::optional<BackendMode> parse_backend_mode(std::string_view text) {
    if (text == "live") return BackendMode::Live;
    if (text == "mock") return BackendMode::Mock;
    return std::nullopt;
}

std::string_view to_string(AblationVariant variant) {
    switch (variant) {
    case AblationVariant::Full: return "full";
    case AblationVariant::NoNear10: return "no_near10";
    case AblationVariant::NoPointSelect: return "no_ptsel";
    case AblationVariant::NoExtVars: return "no_extvars";
    }
    return "unknown";
}

std::optional<AblationVariant> parse_ablation_variant(std::string_view text) {
    for (auto v : {AblationVariant::Full, AblationVariant::NoNear10, AblationVariant::NoPointSelect,
                   AblationVariant::NoExtVars}) {
        if (to_string(v) == text) return v;
    }
    return std::nullopt;
}

void RunConfig::validate() const {
    if (rounds < 0) throw ConfigError("K (rounds) must be >= 0");
    if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
    if (k_near < 1) throw ConfigError("k_near must be >= 1");
}

RoundState::RoundState(int round, std::vector<Score> scores, std::chrono::system_clock::time_point created)
    : round_(round), scores_(std::move(scores)), created_(created) {
    if (round_ < 0) throw std::invalid_argument("round must be >= 0");
}

namespace rundir {

std::filesystem::path round_file(const std::filesystem::path& dir, int k) {
    return dir / fmt::format("round_{}.csv", k);
}
std::filesystem::path refsets_file(const std::filesystem::path& dir, int k) {
    return dir / fmt::format("refsets_{}.csv", k);
}
std::filesystem::path calls_file(const std::filesystem::path& dir) {
    return dir / "calls.jsonl";
}
std::filesystem::path fingerprint_file(const std::filesystem::path& dir) {
    return dir / "dataset.fingerprint";
}
std::filesystem::path config_file(const std::filesystem::path& dir) {
    return dir / "config.snapshot";
}

std::optional<int> last_complete_round(const std::filesystem::path& dir) {
    std::optional<int> last;
    for (int k = 0;; ++k) {
        if (!std::filesystem::exists(round_file(dir, k))) break;
        last = k;
    }
    return last;
}

}  // namespace rundir

std::string dataset_fingerprint(const Dataset& dataset) {
    const auto canonical = format_dataset(dataset, true);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(canonical.data(), canonical.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex = "sha256:";
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

namespace {

std::vector<std::size_t> id_order(const Dataset& dataset) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return dataset.point(a).id() < dataset.point(b).id(); });
    return order;
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out.push_back(';');
        out += id;
    }
    return out;
}

std::vector<std::string> split_ids(std::string_view text) {
    std::vector<std::string> out;
    while (!text.empty()) {
        auto pos = text.find(';');
        if (auto token = text.substr(0, pos); !token.empty()) out.emplace_back(token);
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + 1);
    }
    return out;
}

}  // namespace

std::string format_round(const RoundState& state, const Dataset& dataset) {
    std::string out = "id,score\n";
    for (auto i : id_order(dataset)) {
        out += csv::join_row({dataset.point(i).id(), state.at(i).str()}) + "\n";
    }
    return out;
}

RoundState load_round(const std::filesystem::path& path, const Dataset& dataset, int round) {
    csv::Table table;
    try {
        table = csv::read(path);
    } catch (const DataError& e) {
        throw ResumeError(fmt::format("corrupt round file {}: {}", path.string(), e.what()));
    }
    auto id_col = table.column("id");
    auto score_col = table.column("score");
    if (!id_col || !score_col) throw ResumeError(fmt::format("corrupt round file {}: bad header", path.string()));
    std::vector<std::optional<Score>> scores(dataset.size());
    for (const auto& row : table.rows) {
        auto i = dataset.index_of(row[*id_col]);
        if (!i) throw ResumeError(fmt::format("corrupt round file {}: unknown id '{}'", path.string(), row[*id_col]));
        auto s = Score::parse_str(row[*score_col]);
        if (!s) throw ResumeError(fmt::format("corrupt round file {}: bad score '{}'", path.string(), row[*score_col]));
        if (scores[*i]) throw ResumeError(fmt::format("corrupt round file {}: duplicate id '{}'", path.string(), row[*id_col]));
        scores[*i] = *s;
    }
    std::vector<Score> out;
    out.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!scores[i]) {
            throw ResumeError(fmt::format("corrupt round file {}: missing id '{}'", path.string(), dataset.point(i).id()));
        }
        out.push_back(*scores[i]);
    }
    return RoundState(round, std::move(out));
}

std::vector<RefsetRow> load_refsets(const std::filesystem::path& path) {
    auto table = csv::read(path);
    auto id = table.column("id");
    auto mandatory = table.column("mandatory");
    auto extra = table.column("extra");
    auto variables = table.column("variables");
    if (!id || !mandatory || !extra) throw DataError(fmt::format("{}: bad refsets header", path.string()));
    std::vector<RefsetRow> rows;
    for (const auto& r : table.rows) {
        RefsetRow row;
        row.id = r[*id];
        row.refs.mandatory = split_ids(r[*mandatory]);
        row.refs.extra = split_ids(r[*extra]);
        if (variables) row.variables = CovariateSet::parse_list(r[*variables]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
}

Orchestrator::Orchestrator(const Dataset& dataset, TaskContext task, RunConfig config, Backend& backend,
                           ContextProvider& context, const PromptSet& prompts, std::filesystem::path run_dir)
    : dataset_(dataset),
      task_(std::move(task)),
      config_(config),
      backend_(backend),
      context_(context),
      prompts_(prompts),
      dir_(std::move(run_dir)),
      index_(dataset),
      agents_(backend, prompts, CovariateRegistry::worldclim(), config.d_max) {
    config_.validate();
    if (dataset_.size() < 2) throw DataError("a run needs at least 2 points");
}

RunResult Orchestrator::run(const RunOptions& options) {
    std::filesystem::create_directories(dir_);
    if (rundir::last_complete_round(dir_)) {
        throw ResumeError(fmt::format("{} already holds a run; use resume", dir_.string()));
    }
    csv::write_file_atomic(rundir::fingerprint_file(dir_), dataset_fingerprint(dataset_) + "\n");
    CallLog(rundir::calls_file(dir_), false);  // truncate

    auto start = predict_round();
    persist(*start, nullptr, options);
    if (options.stop_after_round && *options.stop_after_round == 0 && config_.rounds > 0) {
        return {start, 0, false, true};
    }
    return execute(start, options);
}

RunResult Orchestrator::resume(const RunOptions& options) {
    const auto fp_path = rundir::fingerprint_file(dir_);
    if (!std::filesystem::exists(fp_path)) {
        throw ResumeError(fmt::format("{} is not a run directory (no dataset.fingerprint)", dir_.string()));
    }
    auto recorded = csv::read_file(fp_path);
    while (!recorded.empty() && (recorded.back() == '\n' || recorded.back() == '\r')) recorded.pop_back();
    const auto actual = dataset_fingerprint(dataset_);
    if (recorded != actual) {
        throw ResumeError(fmt::format("dataset fingerprint mismatch: run has {}, dataset is {}", recorded, actual));
    }

    const auto last = rundir::last_complete_round(dir_);
    if (!last) {
        spdlog::info("no complete round in {}; starting from round 0", dir_.string());
        std::filesystem::remove(rundir::fingerprint_file(dir_));
        return run(options);
    }
    auto state = std::make_shared<const RoundState>(load_round(rundir::round_file(dir_, *last), dataset_, *last));
    if (*last >= config_.rounds) return {state, *last, false, false};

    // drop audit lines and refsets from the round that never completed
    const auto calls = rundir::calls_file(dir_);
    if (std::filesystem::exists(calls)) {
        std::istringstream in(csv::read_file(calls));
        std::string kept, line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            int round = 0;
            try {
                round = nlohmann::json::parse(line).value("round", 0);
            } catch (const nlohmann::json::exception&) {
                break;  // torn final line from a killed process
            }
            if (round <= *last) kept += line + "\n";
        }
        csv::write_file_atomic(calls, kept);
    }
    std::filesystem::remove(rundir::refsets_file(dir_, *last + 1));

    if (config_.cache_selections && *last >= 1) {
        std::vector<PointOutcome> cached(dataset_.size());
        for (auto& row : load_refsets(rundir::refsets_file(dir_, 1))) {
            auto i = dataset_.require_index(row.id);
            cached[i].refs = std::move(row.refs);
            cached[i].variables = row.variables;
        }
        cached_selections_ = std::move(cached);
    }
    spdlog::info("resuming {} after round {}", dir_.string(), *last);
    return execute(state, options);
}

RunResult Orchestrator::execute(RoundPtr state, const RunOptions& options) {
    for (int k = state->round() + 1; k <= config_.rounds; ++k) {
        auto [next, updates] = refine_round(k, state, options);
        state = next;
        if (options.stop_after_round && *options.stop_after_round == k && k < config_.rounds) {
            return {state, k, false, true};
        }
        if (config_.early_stop && updates == 0 && k < config_.rounds) {
            spdlog::info("round {} made no updates; stopping early", k);
            replicate_forward(*state, options);
            return {std::make_shared<const RoundState>(config_.rounds, state->scores()), config_.rounds, true, false};
        }
    }
    return {state, state->round(), false, false};
}

RoundPtr Orchestrator::predict_round() {
    std::vector<PointOutcome> outcomes(dataset_.size());
    parallel_for(dataset_.size(), config_.concurrency, [&](std::size_t i) {
        const auto& point = dataset_.point(i);
        CallRecorder recorder{0, point.id(), {}};
        ContextBlock context;
        try {
            context = context_.build_context(point);
        } catch (const BackendError& e) {
            spdlog::warn("context for '{}' unavailable: {}", point.id(), e.what());
            context.address = "unavailable";
        }
        outcomes[i].score = agents_.predict(point, context, task_, &recorder);
        outcomes[i].records = std::move(recorder.records);
    });
    std::vector<Score> scores;
    scores.reserve(outcomes.size());
    for (const auto& o : outcomes) scores.push_back(o.score);
    auto state = std::make_shared<const RoundState>(0, std::move(scores));
    std::vector<nlohmann::json> lines;
    for (auto& o : outcomes) {
        for (auto& r : o.records) lines.push_back(std::move(r));
    }
    CallLog(rundir::calls_file(dir_)).write_lines(lines);
    return state;
}

std::pair<RoundPtr, std::size_t> Orchestrator::refine_round(int round, const RoundPtr& previous,
                                                             const RunOptions& options) {
    const bool reuse = config_.cache_selections && round > 1 && cached_selections_.has_value();
    std::vector<PointOutcome> outcomes(dataset_.size());

    parallel_for(dataset_.size(), config_.concurrency, [&](std::size_t i) {
        const auto& point = dataset_.point(i);
        CallRecorder recorder{round, point.id(), {}};
        PointOutcome& out = outcomes[i];

        // every neighbor value must come from the frozen round k-1 snapshot
        auto snapshot_read = [&](std::size_t source) -> const Score& {
            if (previous->round() != round - 1) {
                throw std::logic_error(fmt::format("round {} read a snapshot from round {}", round, previous->round()));
            }
            if (options.observer) options.observer->on_snapshot_read(round, previous->round(), i, source);
            return previous->at(source);
        };

        if (config_.use_covariates) {
            out.variables = reuse ? (*cached_selections_)[i].variables
                                  : agents_.select_variables(point, task_, &recorder);
        }
        PointSelectOptions select{config_.k_near, config_.p_far, config_.menu_size, config_.use_nearest,
                                  config_.use_point_select && !reuse};
        auto selection = agents_.select_points(point, task_, index_, select, &recorder);
        if (reuse) selection.refs.extra = (*cached_selections_)[i].refs.extra;
        out.refs = selection.refs;

        std::vector<ReferenceInput> refs;
        for (const auto& id : out.refs.all()) {
            const auto j = dataset_.require_index(id);
            const auto& ref_point = dataset_.point(j);
            auto hit = std::find_if(selection.ranked.begin(), selection.ranked.end(),
                                    [&](const Neighbor& n) { return n.index == j; });
            const double distance = hit != selection.ranked.end() ? hit->distance_km : haversine_km(point, ref_point);
            refs.push_back({id, ref_point.lat(), ref_point.lon(), distance, snapshot_read(j),
                            config_.use_covariates ? project(dataset_.covariates(j), out.variables) : CovariateRow{}});
        }
        const Score current = snapshot_read(i);
        const CovariateRow target_covariates =
            config_.use_covariates ? project(dataset_.covariates(i), out.variables) : CovariateRow{};

        auto decision = agents_.refine(point, current, task_, refs, target_covariates, &recorder);
        out.updated = decision.is_update();
        out.score = decision.is_update() ? decision.value() : current;
        out.records = std::move(recorder.records);
    });

    std::size_t updates = 0;
    std::vector<Score> scores;
    scores.reserve(outcomes.size());
    for (const auto& o : outcomes) {
        scores.push_back(o.score);
        updates += o.updated;
    }
    auto state = std::make_shared<const RoundState>(round, std::move(scores));
    persist(*state, &outcomes, options);
    if (round == 1 && config_.cache_selections) cached_selections_ = std::move(outcomes);
    spdlog::info("round {}: {} of {} points updated", round, updates, dataset_.size());
    return {state, updates};
}

void Orchestrator::persist(const RoundState& state, const std::vector<PointOutcome>* outcomes,
                           const RunOptions& options) {
    if (outcomes) {
        std::vector<nlohmann::json> lines;
        for (const auto& o : *outcomes) {
            for (const auto& r : o.records) lines.push_back(r);
        }
        CallLog(rundir::calls_file(dir_)).write_lines(lines);

        std::string refsets = "id,mandatory,extra,variables\n";
        for (auto i : id_order(dataset_)) {
            const auto& o = (*outcomes)[i];
            refsets += csv::join_row({dataset_.point(i).id(), join_ids(o.refs.mandatory), join_ids(o.refs.extra),
                                      o.variables.str()}) +
                       "\n";
        }
        csv::write_file_atomic(rundir::refsets_file(dir_, state.round()), refsets);
    }
    csv::write_file_atomic(rundir::round_file(dir_, state.round()), format_round(state, dataset_));
    if (options.observer) options.observer->on_round_written(state);
}

void Orchestrator::replicate_forward(const RoundState& from, const RunOptions& options) {
    std::vector<int> replicated;
    for (int k = from.round() + 1; k <= config_.rounds; ++k) {
        RoundState copy(k, from.scores());
        csv::write_file_atomic(rundir::round_file(dir_, k), format_round(copy, dataset_));
        if (options.observer) options.observer->on_round_written(copy);
        replicated.push_back(k);
    }
    CallLog(rundir::calls_file(dir_))
        .write({{"event", "early_stop"}, {"round", from.round()}, {"replicated_rounds", replicated}});
}

}  // namespace geosr
