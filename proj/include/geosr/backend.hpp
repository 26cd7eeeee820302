#pragma once

#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

namespace geosr {

enum class AgentRole { Predict, VariableSelect, PointSelect, Refine };

std::string_view to_string(AgentRole role);
std::optional<AgentRole> parse_agent_role(std::string_view text);

// Real backends only see `prompt`; mock backends read the structured
// `payload`, which echoes the same ids and numbers the prompt carries.
struct BackendRequest {
    AgentRole role = AgentRole::Predict;
    std::string prompt;
    nlohmann::json payload;
    std::string request_id;
};

struct BackendResponse {
    std::string text;
    int attempts = 1;
    double elapsed_ms = 0.0;
};

class Backend {
public:
    virtual ~Backend() = default;
    // Throws BackendError. Must be safe to call concurrently.
    virtual BackendResponse invoke(const BackendRequest& request) = 0;
    virtual std::string name() const = 0;
};

// Exponential backoff with full jitter: the delay before retry i (0-based)
// is drawn uniformly from [0, ceiling(i)], ceiling(i) = min(base·factor^i,
// max_delay).
struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{500};
    double factor = 2.0;
    std::chrono::milliseconds max_delay{30000};

    std::chrono::milliseconds ceiling(int retry_index) const;
    std::chrono::milliseconds jittered(int retry_index, std::mt19937_64& gen) const;
};

// Spaces calls at least 1/rps seconds apart across all threads sharing it.
// rps <= 0 disables limiting.
class RateLimiter {
public:
    using Clock = std::chrono::steady_clock;

    explicit RateLimiter(double requests_per_second);
    void acquire();
    double requests_per_second() const noexcept { return rps_; }

private:
    double rps_;
    std::mutex mutex_;
    Clock::time_point next_slot_{};
};

// Append-only JSON-lines audit log. Thread-safe.
class CallLog {
public:
    explicit CallLog(const std::filesystem::path& path, bool append = true);
    void write(const nlohmann::json& record);
    void write_lines(const std::vector<nlohmann::json>& records);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
    std::ofstream out_;
};

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace geosr
