#pragma once
// Minimal JSON-over-HTTP POST with bounded retries, shared by the remote
// embedding provider and the chat client.

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace pkt::http {

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};  // doubles after each failure
};

struct Endpoint {
    std::string url;  // scheme://host[:port]/path
    std::chrono::milliseconds timeout{60000};
    std::vector<std::pair<std::string, std::string>> headers;
};

// Retries transport failures, 429 and 5xx. Throws a Provider error
// ("ProviderUnavailable") once attempts are exhausted or on other 4xx.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, const RetryPolicy& retry);

// Splits "https://host:port/a/b" into ("https://host:port", "/a/b").
std::pair<std::string, std::string> split_url(const std::string& url);

// Bearer header from an environment variable; empty when unset.
std::vector<std::pair<std::string, std::string>> bearer_from_env(const std::string& variable);

}  // namespace pkt::http
