#include "geosr/prompts.hpp"

#include "geosr/builtin_prompts.hpp"
#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace geosr {

namespace {

const std::vector<std::string_view> kPredictKeys = {"topic", "scale_hint", "lat", "lon", "map_context"};
const std::vector<std::string_view> kVariableKeys = {"topic", "lat", "lon", "variable_menu", "d_max"};
const std::vector<std::string_view> kPointKeys = {"topic",           "target_id", "lat",  "lon",
                                                  "mandatory_count", "mandatory_list", "p_far", "candidate_menu"};
const std::vector<std::string_view> kRefineKeys = {"topic",         "scale_hint",        "target_id",     "lat", "lon",
                                                   "current_score", "target_covariates", "reference_list"};

template <typename Fn>
void scan_placeholders(std::string_view text, std::string_view label, Fn&& on_name) {
    std::size_t pos = 0;
    while ((pos = text.find("{{", pos)) != std::string_view::npos) {
        auto end = text.find("}}", pos + 2);
        if (end == std::string_view::npos) {
            throw ConfigError(fmt::format("prompt '{}': unterminated placeholder at offset {}", label, pos));
        }
        on_name(text.substr(pos + 2, end - pos - 2), pos, end + 2);
        pos = end + 2;
    }
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text, const std::vector<std::string_view>& allowed, std::string_view label)
    : text_(std::move(text)) {
    scan_placeholders(text_, label, [&](std::string_view name, std::size_t, std::size_t) {
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
            throw ConfigError(fmt::format("prompt '{}': unknown placeholder '{{{{{}}}}}'", label, name));
        }
        if (std::find(placeholders_.begin(), placeholders_.end(), name) == placeholders_.end()) {
            placeholders_.emplace_back(name);
        }
    });
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    out.reserve(text_.size() * 2);
    std::size_t copied = 0;
    scan_placeholders(text_, "render", [&](std::string_view name, std::size_t begin, std::size_t end) {
        auto it = values.find(name);
        if (it == values.end()) throw ConfigError(fmt::format("prompt placeholder '{}' has no value", name));
        out.append(text_, copied, begin - copied);
        out += it->second;
        copied = end;
    });
    out.append(text_, copied, std::string::npos);
    return out;
}

PromptSet PromptSet::builtin() {
    return PromptSet{
        PromptTemplate(builtin_prompts::predict, kPredictKeys, "predict"),
        PromptTemplate(builtin_prompts::variable_select, kVariableKeys, "variable_select"),
        PromptTemplate(builtin_prompts::point_select, kPointKeys, "point_select"),
        PromptTemplate(builtin_prompts::refine, kRefineKeys, "refine"),
    };
}

PromptSet PromptSet::load(const PromptPaths& overrides) {
    auto pick = [](const std::optional<std::filesystem::path>& path, const char* fallback,
                   const std::vector<std::string_view>& keys, std::string_view label) {
        return PromptTemplate(path ? csv::read_file(*path) : std::string(fallback), keys, label);
    };
    return PromptSet{
        pick(overrides.predict, builtin_prompts::predict, kPredictKeys, "predict"),
        pick(overrides.variable_select, builtin_prompts::variable_select, kVariableKeys, "variable_select"),
        pick(overrides.point_select, builtin_prompts::point_select, kPointKeys, "point_select"),
        pick(overrides.refine, builtin_prompts::refine, kRefineKeys, "refine"),
    };
}

}  // namespace geosr
