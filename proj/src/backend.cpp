#include "geosr/backend.hpp"

#include "geosr/error.hpp"
#include "geosr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <thread>

namespace geosr {

std::string_view to_string(AgentRole role) {
    switch (role) {
    case AgentRole::Predict: return "predict";
    case AgentRole::VariableSelect: return "variable_select";
    case AgentRole::PointSelect: return "point_select";
    case AgentRole::Refine: return "refine";
    }
    return "unknown";
}

std::optional<AgentRole> parse_agent_role(std::string_view text) {
    for (auto role : {AgentRole::Predict, AgentRole::VariableSelect, AgentRole::PointSelect, AgentRole::Refine}) {
        if (to_string(role) == text) return role;
    }
    return std::nullopt;
}

std::chrono::milliseconds RetryPolicy::ceiling(int retry_index) const {
    const double ms = static_cast<double>(base_delay.count()) * std::pow(factor, std::max(retry_index, 0));
    const double capped = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(capped));
}

std::chrono::milliseconds RetryPolicy::jittered(int retry_index, std::mt19937_64& gen) const {
    const auto cap = ceiling(retry_index).count();
    return std::chrono::milliseconds(static_cast<std::int64_t>(rng::uniform01(gen) * static_cast<double>(cap + 1)));
}

RateLimiter::RateLimiter(double requests_per_second) : rps_(requests_per_second) {}

void RateLimiter::acquire() {
    if (rps_ <= 0.0) return;
    const auto interval = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / rps_));
    Clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = Clock::now();
        slot = std::max(now, next_slot_);
        next_slot_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

CallLog::CallLog(const std::filesystem::path& path, bool append)
    : path_(path), out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw DataError(fmt::format("cannot open call log {}", path.string()));
}

void CallLog::write(const nlohmann::json& record) {
    std::lock_guard lock(mutex_);
    out_ << record.dump() << '\n';
    out_.flush();
}

void CallLog::write_lines(const std::vector<nlohmann::json>& records) {
    std::lock_guard lock(mutex_);
    for (const auto& r : records) out_ << r.dump() << '\n';
    out_.flush();
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(fmt::format("{}:{}: {}", path.string(), n, e.what()));
        }
    }
    return out;
}

}  // namespace geosr
