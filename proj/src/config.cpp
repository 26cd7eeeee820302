#include "geosr/config.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fmt/format.h>
#include <functional>
#include <sstream>

namespace geosr {

CliConfig::CliConfig() {
    mock.noise_sd = 1.5;
    mock.anchor_bias = 1.0;
}

namespace {

std::string trimmed(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return std::string(s);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError(fmt::format("{}: '{}' is not {}", key, value, expected));
}

template <typename T>
T parse_integer(std::string_view key, std::string_view text, T min_value) {
    auto s = trimmed(text);
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || v < min_value) {
        bad_value(key, text, fmt::format("an integer >= {}", min_value));
    }
    return v;
}

double parse_real(std::string_view key, std::string_view text) {
    auto v = csv::parse_double(trimmed(text));
    if (!v) bad_value(key, text, "a finite number");
    return *v;
}

bool parse_flag(std::string_view key, std::string_view text) {
    auto s = trimmed(text);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad_value(key, text, "a boolean");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string opt_path(const std::optional<std::filesystem::path>& p) { return p ? p->string() : ""; }
std::optional<std::filesystem::path> to_opt_path(std::string_view s) {
    auto t = trimmed(s);
    if (t.empty()) return std::nullopt;
    return std::filesystem::path(t);
}

struct Option {
    std::string key;  // section.key
    std::function<std::string(const CliConfig&)> get;
    std::function<void(CliConfig&, std::string_view)> set;
};

const std::vector<Option>& options() {
    static const std::vector<Option> table = [] {
        std::vector<Option> t;
        auto add = [&](std::string key, auto get, auto set) {
            t.push_back({std::move(key), std::move(get), std::move(set)});
        };
        using C = CliConfig;
        using SV = std::string_view;

        add("run.rounds", [](const C& c) { return std::to_string(c.run.rounds); },
            [](C& c, SV v) { c.run.rounds = parse_integer<int>("run.rounds", v, 0); });
        add("run.k_near", [](const C& c) { return std::to_string(c.run.k_near); },
            [](C& c, SV v) { c.run.k_near = parse_integer<std::size_t>("run.k_near", v, 1); });
        add("run.p_far", [](const C& c) { return std::to_string(c.run.p_far); },
            [](C& c, SV v) { c.run.p_far = parse_integer<std::size_t>("run.p_far", v, 0); });
        add("run.d_max", [](const C& c) { return std::to_string(c.run.d_max); },
            [](C& c, SV v) { c.run.d_max = parse_integer<std::size_t>("run.d_max", v, 0); });
        add("run.menu_size", [](const C& c) { return std::to_string(c.run.menu_size); },
            [](C& c, SV v) { c.run.menu_size = parse_integer<std::size_t>("run.menu_size", v, 0); });
        add("run.concurrency", [](const C& c) { return std::to_string(c.run.concurrency); },
            [](C& c, SV v) { c.run.concurrency = parse_integer<std::size_t>("run.concurrency", v, 1); });
        add("run.seed", [](const C& c) { return std::to_string(c.run.seed); },
            [](C& c, SV v) { c.run.seed = parse_integer<std::uint64_t>("run.seed", v, 0); });
        add("run.backend", [](const C& c) { return std::string(to_string(c.run.backend)); },
            [](C& c, SV v) {
                auto m = parse_backend_mode(trimmed(v));
                if (!m) bad_value("run.backend", v, "live or mock");
                c.run.backend = *m;
            });
        add("run.early_stop", [](const C& c) { return bool_str(c.run.early_stop); },
            [](C& c, SV v) { c.run.early_stop = parse_flag("run.early_stop", v); });
        add("run.cache_selections", [](const C& c) { return bool_str(c.run.cache_selections); },
            [](C& c, SV v) { c.run.cache_selections = parse_flag("run.cache_selections", v); });
        add("run.variant", [](const C& c) { return std::string(to_string(c.run.variant)); },
            [](C& c, SV v) {
                auto a = parse_ablation_variant(trimmed(v));
                if (!a) bad_value("run.variant", v, "full, no_near10, no_ptsel or no_extvars");
                c.run.variant = *a;
                c.run.use_nearest = *a != AblationVariant::NoNear10;
                c.run.use_point_select = *a != AblationVariant::NoPointSelect;
                c.run.use_covariates = *a != AblationVariant::NoExtVars;
            });

        add("task.topic", [](const C& c) { return c.topic; }, [](C& c, SV v) { c.topic = trimmed(v); });
        add("task.scale_hint", [](const C& c) { return c.scale_hint; },
            [](C& c, SV v) { c.scale_hint = trimmed(v); });

        add("backend.endpoint", [](const C& c) { return c.live.endpoint; },
            [](C& c, SV v) { c.live.endpoint = trimmed(v); });
        add("backend.model", [](const C& c) { return c.live.model; }, [](C& c, SV v) { c.live.model = trimmed(v); });
        add("backend.temperature", [](const C& c) { return csv::format_double(c.live.temperature); },
            [](C& c, SV v) { c.live.temperature = parse_real("backend.temperature", v); });
        add("backend.max_tokens", [](const C& c) { return std::to_string(c.live.max_tokens); },
            [](C& c, SV v) { c.live.max_tokens = parse_integer<int>("backend.max_tokens", v, 1); });
        add("backend.timeout_s", [](const C& c) { return std::to_string(c.live.timeout.count()); },
            [](C& c, SV v) { c.live.timeout = std::chrono::seconds(parse_integer<long>("backend.timeout_s", v, 1)); });
        add("backend.requests_per_second", [](const C& c) { return csv::format_double(c.requests_per_second); },
            [](C& c, SV v) { c.requests_per_second = parse_real("backend.requests_per_second", v); });
        add("backend.max_attempts", [](const C& c) { return std::to_string(c.live.retry.max_attempts); },
            [](C& c, SV v) { c.live.retry.max_attempts = parse_integer<int>("backend.max_attempts", v, 1); });
        add("backend.base_delay_ms", [](const C& c) { return std::to_string(c.live.retry.base_delay.count()); },
            [](C& c, SV v) {
                c.live.retry.base_delay = std::chrono::milliseconds(parse_integer<long>("backend.base_delay_ms", v, 0));
            });
        add("backend.backoff_factor", [](const C& c) { return csv::format_double(c.live.retry.factor); },
            [](C& c, SV v) {
                c.live.retry.factor = parse_real("backend.backoff_factor", v);
                if (c.live.retry.factor < 1.0) bad_value("backend.backoff_factor", v, "a number >= 1");
            });
        add("backend.max_delay_ms", [](const C& c) { return std::to_string(c.live.retry.max_delay.count()); },
            [](C& c, SV v) {
                c.live.retry.max_delay = std::chrono::milliseconds(parse_integer<long>("backend.max_delay_ms", v, 0));
            });

        add("mock.field", [](const C& c) { return c.mock.field.str(); },
            [](C& c, SV v) { c.mock.field = FieldSpec::parse(trimmed(v)); });
        add("mock.noise_sd", [](const C& c) { return csv::format_double(c.mock.noise_sd); },
            [](C& c, SV v) {
                c.mock.noise_sd = parse_real("mock.noise_sd", v);
                if (c.mock.noise_sd < 0) bad_value("mock.noise_sd", v, "a number >= 0");
            });
        add("mock.refusal_rate", [](const C& c) { return csv::format_double(c.mock.refusal_rate); },
            [](C& c, SV v) {
                c.mock.refusal_rate = parse_real("mock.refusal_rate", v);
                if (c.mock.refusal_rate < 0 || c.mock.refusal_rate > 1) bad_value("mock.refusal_rate", v, "in [0, 1]");
            });
        add("mock.refine", [](const C& c) { return std::string(to_string(c.mock.refine)); },
            [](C& c, SV v) {
                auto p = parse_mock_refine_policy(trimmed(v));
                if (!p) bad_value("mock.refine", v, "keep or idw");
                c.mock.refine = *p;
            });
        add("mock.idw_power", [](const C& c) { return csv::format_double(c.mock.idw_power); },
            [](C& c, SV v) { c.mock.idw_power = parse_real("mock.idw_power", v); });
        add("mock.blend", [](const C& c) { return csv::format_double(c.mock.blend); },
            [](C& c, SV v) {
                c.mock.blend = parse_real("mock.blend", v);
                if (c.mock.blend < 0 || c.mock.blend > 1) bad_value("mock.blend", v, "in [0, 1]");
            });
        add("mock.anchor_bias", [](const C& c) { return csv::format_double(c.mock.anchor_bias); },
            [](C& c, SV v) { c.mock.anchor_bias = parse_real("mock.anchor_bias", v); });
        add("mock.variable_reply", [](const C& c) { return c.mock.variable_reply; },
            [](C& c, SV v) { c.mock.variable_reply = trimmed(v); });

        add("context.mode", [](const C& c) { return std::string(to_string(c.context.mode)); },
            [](C& c, SV v) {
                auto m = parse_context_mode(trimmed(v));
                if (!m) bad_value("context.mode", v, "live, cache-only or synthetic");
                c.context.mode = *m;
            });
        add("context.cache_dir", [](const C& c) { return c.context.cache_dir.string(); },
            [](C& c, SV v) { c.context.cache_dir = trimmed(v); });
        add("context.reverse_base", [](const C& c) { return c.context.reverse_base; },
            [](C& c, SV v) { c.context.reverse_base = trimmed(v); });
        add("context.overpass_url", [](const C& c) { return c.context.overpass_url; },
            [](C& c, SV v) { c.context.overpass_url = trimmed(v); });
        add("context.nearby_count", [](const C& c) { return std::to_string(c.context.nearby_count); },
            [](C& c, SV v) { c.context.nearby_count = parse_integer<std::size_t>("context.nearby_count", v, 0); });
        add("context.radius_km", [](const C& c) { return csv::format_double(c.context.radius_km); },
            [](C& c, SV v) { c.context.radius_km = parse_real("context.radius_km", v); });
        add("context.politeness_ms", [](const C& c) { return std::to_string(c.context.politeness_delay.count()); },
            [](C& c, SV v) {
                c.context.politeness_delay =
                    std::chrono::milliseconds(parse_integer<long>("context.politeness_ms", v, 0));
            });
        add("context.timeout_s", [](const C& c) { return std::to_string(c.context.timeout.count()); },
            [](C& c, SV v) { c.context.timeout = std::chrono::seconds(parse_integer<long>("context.timeout_s", v, 1)); });
        add("context.user_agent", [](const C& c) { return c.context.user_agent; },
            [](C& c, SV v) { c.context.user_agent = trimmed(v); });

        add("paths.dataset", [](const C& c) { return c.dataset.string(); },
            [](C& c, SV v) { c.dataset = trimmed(v); });
        add("paths.covariates", [](const C& c) { return c.covariates.string(); },
            [](C& c, SV v) { c.covariates = trimmed(v); });
        add("paths.run_dir", [](const C& c) { return c.run_dir.string(); },
            [](C& c, SV v) { c.run_dir = trimmed(v); });

        add("prompts.predict", [](const C& c) { return opt_path(c.prompts.predict); },
            [](C& c, SV v) { c.prompts.predict = to_opt_path(v); });
        add("prompts.variable_select", [](const C& c) { return opt_path(c.prompts.variable_select); },
            [](C& c, SV v) { c.prompts.variable_select = to_opt_path(v); });
        add("prompts.point_select", [](const C& c) { return opt_path(c.prompts.point_select); },
            [](C& c, SV v) { c.prompts.point_select = to_opt_path(v); });
        add("prompts.refine", [](const C& c) { return opt_path(c.prompts.refine); },
            [](C& c, SV v) { c.prompts.refine = to_opt_path(v); });
        return t;
    }();
    return table;
}

}  // namespace

void set_option(CliConfig& config, std::string_view dotted_key, std::string_view value) {
    for (const auto& opt : options()) {
        if (opt.key == dotted_key) {
            opt.set(config, value);
            return;
        }
    }
    throw ConfigError(fmt::format("unknown config key '{}'", dotted_key));
}

std::vector<std::pair<std::string, std::string>> config_entries(const CliConfig& config) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& opt : options()) out.emplace_back(opt.key, opt.get(config));
    return out;
}

std::string format_config(const CliConfig& config) {
    std::string out;
    std::string section;
    for (const auto& [key, value] : config_entries(config)) {
        const auto dot = key.find('.');
        auto sec = key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += "\n";
            out += fmt::format("[{}]\n", sec);
            section = sec;
        }
        out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
    }
    return out;
}

CliConfig parse_config(std::string_view text, std::string_view source_name) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(fmt::format("{}:{}: {}", source_name, e.line(), e.message()));
    }
    CliConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            throw ConfigError(fmt::format("{}: key '{}' is outside any section", source_name, section));
        }
        for (const auto& [key, node] : body) {
            try {
                set_option(config, section + "." + key, node.data());
            } catch (const ConfigError& e) {
                throw ConfigError(fmt::format("{}: {}", source_name, e.what()));
            }
        }
    }
    return config;
}

CliConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = csv::read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    auto config = parse_config(text, path.string());
    absolutize_paths(config, path.parent_path());
    return config;
}

void absolutize_paths(CliConfig& config, const std::filesystem::path& base) {
    auto fix = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = std::filesystem::absolute(base / p).lexically_normal();
    };
    fix(config.dataset);
    fix(config.covariates);
    fix(config.run_dir);
    fix(config.context.cache_dir);
    for (auto* p : {&config.prompts.predict, &config.prompts.variable_select, &config.prompts.point_select,
                    &config.prompts.refine}) {
        if (*p) fix(**p);
    }
}

}  // namespace geosr
