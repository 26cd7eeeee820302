#pragma once

#include "geosr/backend.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <string>

namespace geosr {

struct LiveConfig {
    // Full chat-completions URL, e.g. https://api.openai.com/v1/chat/completions
    std::string endpoint;
    std::string model;
    std::string api_key;  // usually from GEOSR_API_KEY
    double temperature = 0.0;
    int max_tokens = 256;
    std::chrono::seconds timeout{60};
    RetryPolicy retry;
};

struct UrlParts {
    std::string scheme_host_port;  // "https://host:443"
    std::string path;              // "/v1/chat/completions"
};
UrlParts split_url(const std::string& url);

// Chat-completion client in the common hosted-LLM wire format.
//
// Transport failures, HTTP 429 and 5xx are retried with jittered backoff.
// 401/403 fail immediately as Authentication; any other status or an
// unparseable body fails immediately as MalformedReply.
class LiveBackend final : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LiveBackend(LiveConfig config, std::shared_ptr<RateLimiter> limiter, Sleeper sleeper = {});

    BackendResponse invoke(const BackendRequest& request) override;
    std::string name() const override { return "live"; }

    static nlohmann::json request_body(const LiveConfig& config, const std::string& prompt);
    // Extracts choices[0].message.content; throws MalformedReply.
    static std::string parse_reply(const std::string& body);

private:
    LiveConfig config_;
    UrlParts url_;
    std::shared_ptr<RateLimiter> limiter_;
    Sleeper sleeper_;
    std::mutex jitter_mutex_;
    std::mt19937_64 jitter_;
};

}  // namespace geosr
