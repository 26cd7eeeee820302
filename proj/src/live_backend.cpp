#include "geosr/live_backend.hpp"

#include "geosr/error.hpp"

#include "httplib.h"

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <thread>

namespace geosr {

UrlParts split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError(fmt::format("endpoint '{}' has no scheme", url));
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

LiveBackend::LiveBackend(LiveConfig config, std::shared_ptr<RateLimiter> limiter, Sleeper sleeper)
    : config_(std::move(config)),
      url_(split_url(config_.endpoint)),
      limiter_(std::move(limiter)),
      sleeper_(std::move(sleeper)),
      jitter_(std::random_device{}()) {
    if (config_.model.empty()) throw ConfigError("live backend: model name is required");
    if (config_.retry.max_attempts < 1) throw ConfigError("live backend: max_attempts must be >= 1");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

nlohmann::json LiveBackend::request_body(const LiveConfig& config, const std::string& prompt) {
    return {
        {"model", config.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", config.temperature},
        {"max_tokens", config.max_tokens},
    };
}

std::string LiveBackend::parse_reply(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_null()) return {};
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendErrorKind::MalformedReply, fmt::format("malformed endpoint reply: {}", e.what()));
    }
}

BackendResponse LiveBackend::invoke(const BackendRequest& request) {
    const auto started = std::chrono::steady_clock::now();
    const std::string body = request_body(config_, request.prompt).dump();
    std::string last_error;

    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (limiter_) limiter_->acquire();

        httplib::Client client(url_.scheme_host_port);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(url_.path, headers, body, "application/json");
        if (!res) {
            last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
        } else if (res->status == 401 || res->status == 403) {
            throw BackendError(BackendErrorKind::Authentication,
                               fmt::format("{} rejected credentials (HTTP {})", url_.scheme_host_port, res->status),
                               attempt);
        } else if (res->status == 429 || res->status >= 500) {
            last_error = fmt::format("HTTP {}", res->status);
        } else if (res->status != 200) {
            throw BackendError(BackendErrorKind::MalformedReply,
                               fmt::format("endpoint answered HTTP {}: {}", res->status, res->body.substr(0, 200)),
                               attempt);
        } else {
            BackendResponse out;
            try {
                out.text = parse_reply(res->body);
            } catch (const BackendError& e) {
                throw BackendError(e.kind(), e.what(), attempt);
            }
            out.attempts = attempt;
            out.elapsed_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            return out;
        }

        if (attempt == config_.retry.max_attempts) break;
        std::chrono::milliseconds delay;
        {
            std::lock_guard lock(jitter_mutex_);
            delay = config_.retry.jittered(attempt - 1, jitter_);
        }
        spdlog::warn("{}: attempt {} failed ({}), retrying in {} ms", request.request_id, attempt, last_error,
                     delay.count());
        sleeper_(delay);
    }
    throw BackendError(BackendErrorKind::RetriesExhausted,
                       fmt::format("{}: gave up after {} attempts: {}", request.request_id,
                                   config_.retry.max_attempts, last_error),
                       config_.retry.max_attempts);
}

}  // namespace geosr
