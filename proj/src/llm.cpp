#include "pkt/llm.hpp"

#include <charconv>
#include <cmath>

#include "pkt/error.hpp"

namespace pkt::llm {

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw usage_error("InvalidConfig", "llm.endpoint is required for the remote provider");
}

nlohmann::json HttpChatClient::request_body(const std::vector<ChatMessage>& messages) const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return {{"model", config_.model},
            {"messages", std::move(msgs)},
            {"temperature", config_.temperature},
            {"response_format", {{"type", "json_object"}}}};
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) const {
    http::Endpoint endpoint{config_.endpoint, config_.timeout, http::bearer_from_env(config_.api_key_env)};
    const auto response = http::post_json(endpoint, request_body(messages), config_.retry);
    try {
        return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw provider_error("MalformedResponse", "chat response lacks choices[0].message.content");
    }
}

std::optional<nlohmann::json> extract_json_object(std::string_view text) {
    for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}' && --depth == 0) {
                auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

std::optional<double> coerce_probability(const nlohmann::json& value) {
    double p = 0.0;
    if (value.is_number()) {
        p = value.get<double>();
    } else if (value.is_string()) {
        auto s = value.get<std::string>();
        const auto first = s.find_first_not_of(" \t");
        const auto last = s.find_last_not_of(" \t");
        if (first == std::string::npos) return std::nullopt;
        s = s.substr(first, last - first + 1);
        const bool percent = !s.empty() && s.back() == '%';
        if (percent) s.pop_back();
        auto res = std::from_chars(s.data(), s.data() + s.size(), p);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
        if (percent) p /= 100.0;
    } else {
        return std::nullopt;
    }
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) return std::nullopt;
    return p;
}

}  // namespace pkt::llm
