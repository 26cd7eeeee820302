#include "catch_amalgamated.hpp"

#include "geosr/error.hpp"
#include "geosr/evaluation.hpp"
#include "geosr/orchestrator.hpp"
#include "support.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <set>

using namespace geosr;
using testsupport::MockRun;
using testsupport::slurp;
using testsupport::TempDir;

namespace fs = std::filesystem;

namespace {

RunConfig small_config(int rounds) {
    RunConfig c;
    c.rounds = rounds;
    c.concurrency = 4;
    return c;
}

std::map<std::string, std::string> round_map(const fs::path& file) {
    std::map<std::string, std::string> out;
    auto t = csv::read(file);
    for (const auto& r : t.rows) out[r.at(0)] = r.at(1);
    return out;
}

std::vector<std::string> run_files(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

// Wraps a backend and keeps the structured payload of every Refine call.
class RefineSpy : public Backend {
public:
    explicit RefineSpy(Backend& inner) : inner_(inner) {}
    BackendResponse invoke(const BackendRequest& r) override {
        if (r.role == AgentRole::Refine) {
            std::lock_guard lock(mutex_);
            calls.push_back(r);
        }
        return inner_.invoke(r);
    }
    std::string name() const override { return "spy"; }
    std::vector<BackendRequest> calls;

private:
    Backend& inner_;
    std::mutex mutex_;
};

class ReadLog : public RunObserver {
public:
    void on_snapshot_read(int round, int snapshot_round, std::size_t, std::size_t) override {
        std::lock_guard lock(mutex_);
        ++reads;
        if (snapshot_round != round - 1) ++violations;
    }
    void on_round_written(const RoundState& s) override {
        std::lock_guard lock(mutex_);
        written.push_back(s.round());
    }
    std::size_t reads = 0, violations = 0;
    std::vector<int> written;

private:
    std::mutex mutex_;
};

}  // namespace

TEST_CASE("config validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.rounds = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.concurrency = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.k_near = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("parallel_for covers every index and propagates errors") {
    std::vector<std::atomic<int>> hits(500);
    parallel_for(500, 8, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(100, 4, [](std::size_t i) {
                        if (i == 37) throw DataError("boom");
                    }),
                    DataError);
    CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); }));
}

TEST_CASE("zero rounds writes only the baseline") {
    auto ds = testsupport::synthetic_dataset(40, 1);
    MockRun m(ds, testsupport::reference_mock(ds, 1));
    TempDir dir;
    auto result = m.run(small_config(0), dir.path());
    CHECK(result.last_round == 0);
    CHECK(fs::exists(rundir::round_file(dir.path(), 0)));
    CHECK_FALSE(fs::exists(rundir::round_file(dir.path(), 1)));
    CHECK_FALSE(fs::exists(rundir::refsets_file(dir.path(), 1)));
    CHECK(read_jsonl(rundir::calls_file(dir.path())).size() == 40);
    CHECK(slurp(rundir::fingerprint_file(dir.path())) == dataset_fingerprint(ds) + "\n");
}

TEST_CASE("round files are sorted by id and round-trip") {
    auto ds = testsupport::synthetic_dataset(30, 2);
    MockRun m(ds, testsupport::reference_mock(ds, 2));
    TempDir dir;
    auto result = m.run(small_config(1), dir.path());
    auto text = slurp(rundir::round_file(dir.path(), 1));
    auto back = load_round(rundir::round_file(dir.path(), 1), ds, 1);
    CHECK(back.scores() == result.final_state->scores());
    CHECK(format_round(back, ds) == text);
    auto t = csv::parse(text);
    CHECK(t.header == std::vector<std::string>{"id", "score"});
    CHECK(std::is_sorted(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; }));
}

TEST_CASE("always-keep refinement is a fixed point") {
    auto ds = testsupport::synthetic_dataset(50, 4);
    auto mock = testsupport::reference_mock(ds, 4);
    mock.refine = MockRefinePolicy::AlwaysKeep;

    SECTION("without early stop every round is refined") {
        MockRun m(ds, mock);
        TempDir dir;
        auto r = m.run(small_config(3), dir.path());
        CHECK_FALSE(r.stopped_early);
        CHECK(r.last_round == 3);
        const auto base = round_map(rundir::round_file(dir.path(), 0));
        for (int k = 1; k <= 3; ++k) CHECK(round_map(rundir::round_file(dir.path(), k)) == base);
        std::size_t refines = 0;
        for (const auto& rec : read_jsonl(rundir::calls_file(dir.path()))) refines += rec.value("role", "") == "refine";
        CHECK(refines == 150);
    }
    SECTION("with early stop later rounds are replicated") {
        MockRun m(ds, mock);
        TempDir dir;
        auto cfg = small_config(4);
        cfg.early_stop = true;
        auto r = m.run(cfg, dir.path());
        CHECK(r.stopped_early);
        CHECK(r.last_round == 4);
        CHECK(r.final_state->round() == 4);
        const auto base = slurp(rundir::round_file(dir.path(), 0));
        for (int k = 1; k <= 4; ++k) CHECK(slurp(rundir::round_file(dir.path(), k)) == base);
        auto calls = read_jsonl(rundir::calls_file(dir.path()));
        std::size_t refines = 0;
        for (const auto& rec : calls) refines += rec.value("role", "") == "refine";
        CHECK(refines == 50);
        REQUIRE_FALSE(calls.empty());
        CHECK(calls.back().at("event") == "early_stop");
        CHECK(calls.back().at("replicated_rounds") == nlohmann::json::array({2, 3, 4}));
    }
}

TEST_CASE("refinement reads only the previous round") {
    auto ds = testsupport::synthetic_dataset(80, 5);
    MockBackend inner(testsupport::reference_mock(ds, 5));
    RefineSpy spy(inner);
    ContextProvider ctx{ContextConfig{}};
    auto prompts = PromptSet::builtin();
    TempDir dir;
    Orchestrator orch(ds, TaskContext("average annual temperature", ""), small_config(3), spy, ctx, prompts, dir.path());
    ReadLog log;
    RunOptions opts;
    opts.observer = &log;
    orch.run(opts);
    CHECK(log.violations == 0);
    CHECK(log.reads > 0);
    CHECK(log.written == std::vector<int>{0, 1, 2, 3});

    std::vector<std::map<std::string, std::string>> rounds;
    for (int k = 0; k <= 3; ++k) rounds.push_back(round_map(rundir::round_file(dir.path(), k)));
    REQUIRE(spy.calls.size() == 240);
    for (const auto& call : spy.calls) {
        const int k = std::stoi(call.request_id.substr(1, call.request_id.find('-') - 1));
        REQUIRE(k >= 1);
        const auto& prev = rounds[static_cast<std::size_t>(k - 1)];
        const auto id = call.payload.at("point").at("id").get<std::string>();
        CHECK(call.payload.at("current").get<std::string>() == prev.at(id));
        for (const auto& ref : call.payload.at("refs")) {
            CHECK(ref.at("score").get<std::string>() == prev.at(ref.at("id").get<std::string>()));
        }
    }
}

TEST_CASE("concurrency does not change results") {
    auto ds = testsupport::synthetic_dataset(120, 6);
    TempDir a, b;
    auto c1 = small_config(3);
    c1.concurrency = 1;
    auto c8 = small_config(3);
    c8.concurrency = 8;
    MockRun(ds, testsupport::reference_mock(ds, 6)).run(c1, a.path());
    MockRun(ds, testsupport::reference_mock(ds, 6)).run(c8, b.path());
    REQUIRE(run_files(a.path()) == run_files(b.path()));
    for (const auto& name : run_files(a.path())) CHECK(slurp(a / name) == slurp(b / name));
}

TEST_CASE("resume after interruption is byte-identical") {
    auto ds = testsupport::synthetic_dataset(100, 7);
    auto cfg = small_config(3);
    TempDir full, part;
    MockRun(ds, testsupport::reference_mock(ds, 7)).run(cfg, full.path());

    for (int stop : {0, 1, 2}) {
        TempDir p;
        RunOptions o;
        o.stop_after_round = stop;
        auto r = MockRun(ds, testsupport::reference_mock(ds, 7)).run(cfg, p.path(), o);
        CHECK(r.interrupted);
        CHECK(rundir::last_complete_round(p.path()) == stop);
        auto resumed = MockRun(ds, testsupport::reference_mock(ds, 7)).resume(cfg, p.path());
        CHECK_FALSE(resumed.interrupted);
        CHECK(resumed.last_round == 3);
        REQUIRE(run_files(full.path()) == run_files(p.path()));
        for (const auto& name : run_files(full.path())) {
            INFO("stop after " << stop << ", file " << name);
            CHECK(slurp(full / name) == slurp(p / name));
        }
    }
}

TEST_CASE("resume discards partial output of the interrupted round") {
    auto ds = testsupport::synthetic_dataset(60, 8);
    auto cfg = small_config(2);
    TempDir full, part;
    MockRun(ds, testsupport::reference_mock(ds, 8)).run(cfg, full.path());
    RunOptions o;
    o.stop_after_round = 1;
    MockRun(ds, testsupport::reference_mock(ds, 8)).run(cfg, part.path(), o);
    // simulate a crash mid round 2: stray refsets file and a torn call record
    csv::write_file_atomic(rundir::refsets_file(part.path(), 2), "id,mandatory,extra,variables\n");
    {
        std::ofstream app(rundir::calls_file(part.path()), std::ios::app);
        app << "{\"round\":2,\"role\":\"refine\",\"point_id\":\"p01\"}\n{\"round\":2,\"trunc";
    }
    MockRun(ds, testsupport::reference_mock(ds, 8)).resume(cfg, part.path());
    for (const auto& name : run_files(full.path())) CHECK(slurp(full / name) == slurp(part / name));
}

TEST_CASE("resuming a finished run is a no-op") {
    auto ds = testsupport::synthetic_dataset(40, 9);
    auto cfg = small_config(2);
    TempDir dir;
    MockRun m(ds, testsupport::reference_mock(ds, 9));
    m.run(cfg, dir.path());
    std::map<std::string, std::string> before;
    for (const auto& name : run_files(dir.path())) before[name] = slurp(dir / name);
    const auto calls_before = m.backend.calls();
    auto r = m.resume(cfg, dir.path());
    CHECK(r.last_round == 2);
    CHECK(m.backend.calls() == calls_before);
    for (const auto& [name, text] : before) CHECK(slurp(dir / name) == text);
}

TEST_CASE("resume rejects a different dataset or corrupt rounds") {
    auto ds = testsupport::synthetic_dataset(40, 10);
    auto cfg = small_config(2);
    TempDir dir;
    RunOptions o;
    o.stop_after_round = 1;
    MockRun(ds, testsupport::reference_mock(ds, 10)).run(cfg, dir.path(), o);

    auto other = testsupport::synthetic_dataset(40, 11);
    CHECK_THROWS_AS(MockRun(other, testsupport::reference_mock(other, 10)).resume(cfg, dir.path()), ResumeError);

    auto text = slurp(rundir::round_file(dir.path(), 1));
    csv::write_file_atomic(rundir::round_file(dir.path(), 1), text.substr(0, text.size() / 2) + "\n");
    CHECK_THROWS_AS(MockRun(ds, testsupport::reference_mock(ds, 10)).resume(cfg, dir.path()), ResumeError);

    csv::write_file_atomic(rundir::round_file(dir.path(), 1), "id,score\n" + ds.point(0).id() + ",12.0\n");
    CHECK_THROWS_AS(load_round(rundir::round_file(dir.path(), 1), ds, 1), ResumeError);
}

TEST_CASE("a fresh run refuses to overwrite existing rounds") {
    auto ds = testsupport::synthetic_dataset(20, 12);
    TempDir dir;
    MockRun m(ds, testsupport::reference_mock(ds, 12));
    m.run(small_config(1), dir.path());
    CHECK_THROWS_AS(m.run(small_config(1), dir.path()), ResumeError);
}

TEST_CASE("refused baseline scores can be refined from answered neighbors") {
    auto ds = testsupport::synthetic_dataset(150, 13);
    auto mock = testsupport::reference_mock(ds, 13);
    mock.refusal_rate = 0.3;
    MockRun m(ds, mock);
    TempDir dir;
    m.run(small_config(2), dir.path());
    auto r0 = round_map(rundir::round_file(dir.path(), 0));
    auto r1 = round_map(rundir::round_file(dir.path(), 1));
    std::size_t refused0 = 0, recovered = 0;
    for (const auto& [id, s] : r0) {
        if (s != "REFUSED") continue;
        ++refused0;
        recovered += r1.at(id) != "REFUSED";
    }
    CHECK(refused0 > 20);
    CHECK(recovered > 0);
    // refusals never appear from nowhere: refine can only keep or set a value
    for (const auto& [id, s] : r1) {
        if (s == "REFUSED") CHECK(r0.at(id) == "REFUSED");
    }
}

TEST_CASE("cached selections reuse round-one choices") {
    auto ds = testsupport::synthetic_dataset(60, 14);
    auto cfg = small_config(3);
    cfg.cache_selections = true;
    TempDir dir;
    MockRun(ds, testsupport::reference_mock(ds, 14)).run(cfg, dir.path());
    const auto r1 = slurp(rundir::refsets_file(dir.path(), 1));
    CHECK(slurp(rundir::refsets_file(dir.path(), 2)) == r1);
    CHECK(slurp(rundir::refsets_file(dir.path(), 3)) == r1);
    std::map<int, std::set<std::string>> roles;
    for (const auto& rec : read_jsonl(rundir::calls_file(dir.path()))) {
        roles[rec.at("round").get<int>()].insert(rec.at("role").get<std::string>());
    }
    CHECK(roles[1] == std::set<std::string>{"variable_select", "point_select", "refine"});
    CHECK(roles[2] == std::set<std::string>{"refine"});
    CHECK(roles[3] == std::set<std::string>{"refine"});

    // resume keeps using the round-one choices
    TempDir part;
    RunOptions o;
    o.stop_after_round = 2;
    MockRun(ds, testsupport::reference_mock(ds, 14)).run(cfg, part.path(), o);
    MockRun(ds, testsupport::reference_mock(ds, 14)).resume(cfg, part.path());
    for (const auto& name : run_files(dir.path())) CHECK(slurp(dir / name) == slurp(part / name));
}

TEST_CASE("ablation variants shape the reference sets") {
    auto ds = testsupport::synthetic_dataset(80, 15);
    auto index = build_index(ds);
    auto base = small_config(1);
    for (auto variant : {AblationVariant::Full, AblationVariant::NoNear10, AblationVariant::NoPointSelect,
                         AblationVariant::NoExtVars}) {
        INFO("variant " << to_string(variant));
        TempDir dir;
        MockRun(ds, testsupport::reference_mock(ds, 15)).run(ablation_config(base, variant), dir.path());
        auto rows = load_refsets(rundir::refsets_file(dir.path(), 1));
        REQUIRE(rows.size() == ds.size());
        std::set<std::string> roles;
        for (const auto& rec : read_jsonl(rundir::calls_file(dir.path()))) roles.insert(rec.at("role").get<std::string>());
        for (const auto& row : rows) {
            const auto nearest = index.nearest_k(row.id, 10);
            switch (variant) {
            case AblationVariant::Full:
                CHECK(row.refs.mandatory == nearest);
                CHECK(row.refs.extra.size() == 5);
                CHECK_FALSE(row.variables.empty());
                break;
            case AblationVariant::NoNear10:
                CHECK(row.refs.mandatory.empty());
                CHECK_FALSE(row.refs.extra.empty());
                break;
            case AblationVariant::NoPointSelect:
                CHECK(row.refs.mandatory == nearest);
                CHECK(row.refs.extra.empty());
                break;
            case AblationVariant::NoExtVars:
                CHECK(row.refs.mandatory == nearest);
                CHECK(row.variables.empty());
                break;
            }
        }
        CHECK(roles.contains("point_select") == (variant != AblationVariant::NoPointSelect));
        CHECK(roles.contains("variable_select") == (variant != AblationVariant::NoExtVars));
    }
}

TEST_CASE("ablation names") {
    for (auto v : {AblationVariant::Full, AblationVariant::NoNear10, AblationVariant::NoPointSelect,
                   AblationVariant::NoExtVars}) {
        CHECK(parse_ablation_variant(to_string(v)) == v);
    }
    CHECK(to_string(AblationVariant::NoPointSelect) == "no_ptsel");
    CHECK_THROWS_AS(ablation_config(RunConfig{}, "no_such"), ConfigError);
}
