#include "pkt/http.hpp"

#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "pkt/error.hpp"

namespace pkt::http {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw usage_error("InvalidConfig", fmt::format("bad URL '{}'", url));
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::vector<std::pair<std::string, std::string>> bearer_from_env(const std::string& variable) {
    const char* key = std::getenv(variable.c_str());
    if (!key || !*key) return {};
    return {{"Authorization", std::string("Bearer ") + key}};
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, const RetryPolicy& retry) {
    const auto [base, path] = split_url(endpoint.url);
    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    for (const auto& [k, v] : endpoint.headers) headers.emplace(k, v);

    const std::string payload = body.dump();
    auto backoff = retry.initial_backoff;
    std::string last_error = "no attempt made";
    for (int attempt = 1; attempt <= std::max(1, retry.attempts); ++attempt) {
        auto res = client.Post(path, headers, payload, "application/json");
        if (res && res->status >= 200 && res->status < 300) {
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                last_error = fmt::format("response is not JSON: {}", e.what());
            }
        } else if (res) {
            last_error = fmt::format("HTTP {} from {}", res->status, endpoint.url);
            const bool retryable = res->status == 429 || res->status >= 500;
            if (!retryable) break;
        } else {
            last_error = fmt::format("transport error '{}' contacting {}", httplib::to_string(res.error()),
                                     endpoint.url);
        }
        if (attempt < retry.attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw provider_error("ProviderUnavailable", last_error);
}

}  // namespace pkt::http
