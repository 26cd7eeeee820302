#include "geosr/agents.hpp"

#include "geosr/csv.hpp"
#include "geosr/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <unordered_set>

namespace geosr {

TaskContext::TaskContext(std::string topic_, std::string scale_hint_)
    : topic(std::move(topic_)), scale_hint(std::move(scale_hint_)) {
    if (topic.empty()) throw ConfigError("task topic must not be empty");
    if (scale_hint.empty()) scale_hint = "0.0 is the lowest and 9.9 the highest value worldwide";
}

std::vector<std::string> ReferenceSet::all() const {
    std::vector<std::string> out = mandatory;
    out.insert(out.end(), extra.begin(), extra.end());
    return out;
}

RefineDecision RefineDecision::update(Score value) {
    if (value.is_refused()) throw std::invalid_argument("an update must carry a value");
    return RefineDecision(value);
}

std::string RefineDecision::str() const {
    return update_ ? "UPDATE: " + update_->str() : "KEEP";
}

// ---------------------------------------------------------------------------
// Parsing helpers

namespace {

constexpr double kScoreMax = 9.9;
constexpr double kRangeSlack = 1e-9;

struct NumberToken {
    double value;
    std::size_t begin;
    std::size_t end;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<NumberToken> scan_numbers(std::string_view s) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const bool starts = is_digit(s[i]) || (s[i] == '.' && i + 1 < s.size() && is_digit(s[i + 1]));
        if (!starts) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        std::size_t j = i;
        while (j < s.size() && is_digit(s[j])) ++j;
        if (j < s.size() && s[j] == '.' && j + 1 < s.size() && is_digit(s[j + 1])) {
            ++j;
            while (j < s.size() && is_digit(s[j])) ++j;
        }
        double value = 0.0;
        auto digits = s.substr(begin, j - begin);
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec == std::errc{} && std::isfinite(value)) {
            const bool negative = begin > 0 && s[begin - 1] == '-' && (begin < 2 || !is_alnum(s[begin - 2]));
            if (negative) {
                value = -value;
                --begin;
            }
            out.push_back({value, begin, j});
        }
        i = j;
    }
    return out;
}

bool in_score_range(double v) {
    return v >= 0.0 && v <= kScoreMax + kRangeSlack;
}

// Position of `word` in `lower` not embedded in a longer alphanumeric run
// on its left.
std::size_t find_word(std::string_view lower, std::string_view word, std::size_t from = 0) {
    auto pos = lower.find(word, from);
    while (pos != std::string_view::npos) {
        if (pos == 0 || !is_alnum(lower[pos - 1])) return pos;
        pos = lower.find(word, pos + 1);
    }
    return std::string_view::npos;
}

const NumberToken* first_number_after(const std::vector<NumberToken>& numbers, std::size_t pos) {
    for (const auto& n : numbers) {
        if (n.begin >= pos) return &n;
    }
    return nullptr;
}

constexpr std::string_view kRefusalMarkers[] = {
    "cannot", "can't", "can not", "unable", "won't", "will not", "not able", "decline",
    "refuse", "sorry", "as an ai", "not possible", "i don't have", "i do not have"};

bool reads_as_refusal(std::string_view lower) {
    for (auto marker : kRefusalMarkers) {
        if (lower.find(marker) != std::string_view::npos) return true;
    }
    return false;
}

std::string_view trim_line(std::string_view line) {
    auto is_junk = [](char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '*' || c == '-' || c == '#' || c == '"' || c == '\'' ||
               c == '`' || c == '>';
    };
    while (!line.empty() && is_junk(line.front())) line.remove_prefix(1);
    return line;
}

}  // namespace

Score parse_score_reply(std::string_view text) {
    const auto lower = lowercase(text);
    const auto numbers = scan_numbers(text);

    if (auto pos = find_word(lower, "score"); pos != std::string::npos) {
        if (const auto* n = first_number_after(numbers, pos + 5)) {
            if (!in_score_range(n->value)) return Score::refused();
            return Score::from_value(std::min(n->value, kScoreMax)).value_or(Score::refused());
        }
    }
    if (reads_as_refusal(lower)) return Score::refused();
    for (const auto& n : numbers) {
        if (in_score_range(n.value)) {
            return Score::from_value(std::min(n.value, kScoreMax)).value_or(Score::refused());
        }
    }
    return Score::refused();
}

VariableReply parse_variable_reply(std::string_view text, std::size_t d_max) {
    VariableReply out;
    const auto lower = lowercase(text);
    bool capped = false;
    std::size_t pos = 0;
    while ((pos = find_word(lower, "bio", pos)) != std::string::npos) {
        std::size_t j = pos + 3;
        while (j < lower.size() && is_digit(lower[j]) && j - pos < 8) ++j;
        if (j == pos + 3) {
            pos = j;
            continue;
        }
        const auto token = std::string_view(lower).substr(pos, j - pos);
        pos = j;
        auto code = CovariateCode::parse(token);
        if (!code) {
            out.warnings.push_back(fmt::format("unknown covariate code '{}' dropped", token));
            continue;
        }
        if (out.codes.contains(*code)) continue;
        if (out.codes.size() >= d_max) {
            if (!capped) out.warnings.push_back(fmt::format("selection capped at {} variables", d_max));
            capped = true;
            continue;
        }
        out.codes.insert(*code);
    }
    return out;
}

PointReply parse_point_reply(std::string_view text, const std::vector<std::string>& menu_ids,
                             std::string_view target_id, std::size_t p_far) {
    PointReply out;
    const std::unordered_set<std::string_view> menu(menu_ids.begin(), menu_ids.end());
    std::unordered_set<std::string> chosen;
    std::size_t dropped = 0;
    bool saw_none = false;

    auto is_delim = [](char c) {
        return c == ',' || c == ';' || c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '[' || c == ']' ||
               c == '(' || c == ')' || c == '"' || c == '\'' || c == '`' || c == '{' || c == '}' || c == '<' ||
               c == '>' || c == '|';
    };
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_delim(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_delim(text[j])) ++j;
        auto token = text.substr(i, j - i);
        i = j;
        while (!token.empty() && (token.back() == '.' || token.back() == ':')) token.remove_suffix(1);
        if (token.empty()) continue;
        if (token == target_id) {
            out.warnings.push_back(fmt::format("target id '{}' dropped from reference choices", token));
            continue;
        }
        if (!menu.contains(token)) {
            if (lowercase(token) == "none") saw_none = true;
            ++dropped;
            continue;
        }
        if (chosen.contains(std::string(token))) continue;
        if (out.ids.size() >= p_far) continue;
        chosen.emplace(token);
        out.ids.emplace_back(token);
    }
    if (out.ids.empty() && dropped > 0 && !saw_none) {
        out.warnings.push_back("no valid candidate ids in point-selection reply");
    }
    return out;
}

RefineReply parse_refine_reply(std::string_view text) {
    RefineReply out;
    const auto lower = lowercase(text);
    const auto numbers = scan_numbers(text);

    auto decide_update = [&](std::size_t keyword_end) {
        const auto* n = first_number_after(numbers, keyword_end);
        if (!n) {
            out.warnings.push_back("UPDATE without a value; keeping current score");
            return;
        }
        if (!in_score_range(n->value)) {
            out.warnings.push_back(fmt::format("UPDATE value {} outside [0.0, 9.9]; keeping current score",
                                               csv::format_double(n->value)));
            return;
        }
        if (auto s = Score::from_value(std::min(n->value, kScoreMax))) out.decision = RefineDecision::update(*s);
    };

    // a line that starts with the keyword wins over mentions inside prose
    std::size_t line_start = 0;
    while (line_start <= lower.size()) {
        auto line_end = lower.find('\n', line_start);
        if (line_end == std::string::npos) line_end = lower.size();
        auto line = trim_line(std::string_view(lower).substr(line_start, line_end - line_start));
        const auto offset = static_cast<std::size_t>(line.data() - lower.data());
        if (line.starts_with("update")) {
            decide_update(offset + 6);
            return out;
        }
        if (line.starts_with("keep")) return out;
        line_start = line_end + 1;
    }

    const auto upd = find_word(lower, "update");
    const auto keep = find_word(lower, "keep");
    if (upd != std::string::npos && (keep == std::string::npos || upd < keep)) {
        decide_update(upd + 6);
    } else if (keep == std::string::npos) {
        out.warnings.push_back("unparseable refine reply; keeping current score");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agents

std::string CallRecorder::request_id(AgentRole role) const {
    return fmt::format("r{}-{}-{}", round, point_id, to_string(role));
}

nlohmann::json point_json(const GeoPoint& point) {
    return {{"id", point.id()}, {"lat", point.lat()}, {"lon", point.lon()}};
}

nlohmann::json covariates_json(const CovariateRow& row) {
    nlohmann::json j = nlohmann::json::object();
    for (auto code : row.keys().codes()) j[code.str()] = *row.get(code);
    return j;
}

Agents::Agents(Backend& backend, const PromptSet& prompts, const CovariateRegistry& registry, std::size_t d_max)
    : backend_(backend), prompts_(prompts), registry_(registry), d_max_(d_max) {}

std::optional<BackendResponse> Agents::call(AgentRole role, std::string prompt, nlohmann::json payload,
                                            CallRecorder* recorder) const {
    BackendRequest request{role, std::move(prompt), std::move(payload),
                           recorder ? recorder->request_id(role) : std::string(to_string(role))};
    nlohmann::json record = {{"request_id", request.request_id},
                             {"round", recorder ? recorder->round : 0},
                             {"role", to_string(role)},
                             {"point_id", request.payload.at("point").at("id")},
                             {"prompt", request.prompt},
                             {"payload", request.payload}};
    std::optional<BackendResponse> response;
    try {
        response = backend_.invoke(request);
        record["response"] = response->text;
        record["attempts"] = response->attempts;
        record["elapsed_ms"] = response->elapsed_ms;
    } catch (const BackendError& e) {
        if (e.kind() == BackendErrorKind::Authentication) throw;
        spdlog::warn("{}: backend failure ({}): {}", request.request_id, to_string(e.kind()), e.what());
        record["response"] = nullptr;
        record["attempts"] = e.attempts();
        record["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
    }
    if (recorder) recorder->records.push_back(std::move(record));
    return response;
}

namespace {

void annotate(CallRecorder* recorder, const nlohmann::json& parsed, const std::vector<std::string>& warnings) {
    if (!recorder || recorder->records.empty()) return;
    auto& r = recorder->records.back();
    r["parsed"] = parsed;
    if (!warnings.empty()) r["warnings"] = warnings;
}

void log_warnings(std::string_view who, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) spdlog::warn("{}: {}", who, w);
}

std::string coord(double v) {
    return fmt::format("{:.4f}", v);
}

}  // namespace

std::string Agents::render_predict(const GeoPoint& point, const ContextBlock& context, const TaskContext& task) const {
    return prompts_.predict.render({{"topic", task.topic},
                                    {"scale_hint", task.scale_hint},
                                    {"lat", coord(point.lat())},
                                    {"lon", coord(point.lon())},
                                    {"map_context", context.render_nearby()}});
}

Score Agents::predict(const GeoPoint& point, const ContextBlock& context, const TaskContext& task,
                      CallRecorder* recorder) const {
    nlohmann::json payload = {{"point", point_json(point)}, {"context", context.to_json()}};
    auto response = call(AgentRole::Predict, render_predict(point, context, task), std::move(payload), recorder);
    if (!response) {
        annotate(recorder, "REFUSED", {"backend failure"});
        return Score::refused();
    }
    auto score = parse_score_reply(response->text);
    annotate(recorder, score.str(), {});
    return score;
}

std::string Agents::render_variable_select(const GeoPoint& point, const TaskContext& task) const {
    std::string menu;
    for (const auto& e : registry_.entries()) {
        menu += fmt::format("- {}: {} ({}). {}\n", e.code, e.name, e.unit, e.relevance);
    }
    if (!menu.empty()) menu.pop_back();
    return prompts_.variable_select.render({{"topic", task.topic},
                                            {"lat", coord(point.lat())},
                                            {"lon", coord(point.lon())},
                                            {"variable_menu", menu},
                                            {"d_max", std::to_string(d_max_)}});
}

CovariateSet Agents::select_variables(const GeoPoint& point, const TaskContext& task, CallRecorder* recorder) const {
    nlohmann::json payload = {{"point", point_json(point)}, {"d_max", d_max_}};
    auto response = call(AgentRole::VariableSelect, render_variable_select(point, task), std::move(payload), recorder);
    if (!response) return {};
    auto reply = parse_variable_reply(response->text, d_max_);
    log_warnings(fmt::format("variable selection for '{}'", point.id()), reply.warnings);
    annotate(recorder, reply.codes.str(), reply.warnings);
    return reply.codes;
}

std::string Agents::render_point_select(const GeoPoint& point, const TaskContext& task, const SpatialIndex& index,
                                        const std::vector<Neighbor>& mandatory, const std::vector<Neighbor>& menu,
                                        std::size_t p_far) const {
    auto list = [&](const std::vector<Neighbor>& items) {
        if (items.empty()) return std::string("(none)");
        std::string out;
        for (const auto& n : items) {
            out += fmt::format("- {} ({}, {}), {:.1f} km\n", index.id(n.index), coord(index.lat(n.index)),
                               coord(index.lon(n.index)), n.distance_km);
        }
        out.pop_back();
        return out;
    };
    return prompts_.point_select.render({{"topic", task.topic},
                                         {"target_id", point.id()},
                                         {"lat", coord(point.lat())},
                                         {"lon", coord(point.lon())},
                                         {"mandatory_count", std::to_string(mandatory.size())},
                                         {"mandatory_list", list(mandatory)},
                                         {"p_far", std::to_string(p_far)},
                                         {"candidate_menu", list(menu)}});
}

PointSelection Agents::select_points(const GeoPoint& point, const TaskContext& task, const SpatialIndex& index,
                                     const PointSelectOptions& options, CallRecorder* recorder) const {
    const auto target = index.require_index(point.id());
    PointSelection out;
    out.ranked = index.neighbors(target, options.k_near + options.menu_size);
    const std::size_t ring = std::min(options.k_near, out.ranked.size());
    std::vector<Neighbor> mandatory;
    if (options.include_mandatory) mandatory.assign(out.ranked.begin(), out.ranked.begin() + static_cast<long>(ring));
    std::vector<Neighbor> menu(out.ranked.begin() + static_cast<long>(ring), out.ranked.end());

    for (const auto& n : mandatory) out.refs.mandatory.push_back(index.id(n.index));
    if (!options.use_agent || options.p_far == 0 || menu.empty()) return out;

    nlohmann::json menu_json = nlohmann::json::array();
    std::vector<std::string> menu_ids;
    for (const auto& n : menu) {
        menu_ids.push_back(index.id(n.index));
        menu_json.push_back({{"id", menu_ids.back()}, {"distance_km", n.distance_km}});
    }
    nlohmann::json payload = {{"point", point_json(point)},
                              {"mandatory", out.refs.mandatory},
                              {"menu", menu_json},
                              {"p_far", options.p_far}};
    auto response = call(AgentRole::PointSelect,
                         render_point_select(point, task, index, mandatory, menu, options.p_far), std::move(payload),
                         recorder);
    if (!response) return out;
    auto reply = parse_point_reply(response->text, menu_ids, point.id(), options.p_far);
    log_warnings(fmt::format("point selection for '{}'", point.id()), reply.warnings);
    annotate(recorder, reply.ids, reply.warnings);
    out.refs.extra = std::move(reply.ids);
    return out;
}

std::string Agents::format_covariates_inline(const CovariateRow& row) const {
    std::string out;
    for (auto code : row.keys().codes()) {
        if (!out.empty()) out += ", ";
        out += fmt::format("{}={} {}", code.str(), csv::format_double(*row.get(code)), registry_.info(code).unit);
    }
    return out;
}

std::string Agents::render_refine(const GeoPoint& point, const Score& current, const TaskContext& task,
                                  const std::vector<ReferenceInput>& refs,
                                  const CovariateRow& target_covariates) const {
    std::string target_block;
    if (!target_covariates.empty()) {
        target_block = "Environmental variables at this location:\n";
        for (auto code : target_covariates.keys().codes()) {
            const auto& info = registry_.info(code);
            target_block += fmt::format("- {} ({}): {} {}\n", code.str(), info.name,
                                        csv::format_double(*target_covariates.get(code)), info.unit);
        }
    }
    std::string ref_lines;
    for (const auto& r : refs) {
        ref_lines += fmt::format("- {} ({}, {}), {:.1f} km away: rating {}", r.id, coord(r.lat), coord(r.lon),
                                 r.distance_km, r.score.is_refused() ? std::string("none") : r.score.str());
        if (!r.covariates.empty()) ref_lines += "; " + format_covariates_inline(r.covariates);
        ref_lines += "\n";
    }
    if (ref_lines.empty()) ref_lines = "(none)";
    else ref_lines.pop_back();
    return prompts_.refine.render({{"topic", task.topic},
                                   {"scale_hint", task.scale_hint},
                                   {"target_id", point.id()},
                                   {"lat", coord(point.lat())},
                                   {"lon", coord(point.lon())},
                                   {"current_score", current.is_refused() ? std::string("none") : current.str()},
                                   {"target_covariates", target_block},
                                   {"reference_list", ref_lines}});
}

RefineDecision Agents::refine(const GeoPoint& point, const Score& current, const TaskContext& task,
                              const std::vector<ReferenceInput>& refs, const CovariateRow& target_covariates,
                              CallRecorder* recorder) const {
    nlohmann::json refs_json = nlohmann::json::array();
    for (const auto& r : refs) {
        refs_json.push_back({{"id", r.id},
                             {"distance_km", r.distance_km},
                             {"score", r.score.str()},
                             {"covariates", covariates_json(r.covariates)}});
    }
    nlohmann::json payload = {{"point", point_json(point)},
                              {"current", current.str()},
                              {"refs", refs_json},
                              {"target_covariates", covariates_json(target_covariates)}};
    auto response = call(AgentRole::Refine, render_refine(point, current, task, refs, target_covariates),
                         std::move(payload), recorder);
    if (!response) {
        annotate(recorder, "KEEP", {"backend failure"});
        return RefineDecision::keep();
    }
    auto reply = parse_refine_reply(response->text);
    log_warnings(fmt::format("refine for '{}'", point.id()), reply.warnings);
    annotate(recorder, reply.decision.str(), reply.warnings);
    return reply.decision;
}

}  // namespace geosr
