#pragma once
// Chat-completion client abstraction and tolerant JSON extraction from
// model output.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkt/http.hpp"

namespace pkt::llm {

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

// Implementations must tolerate concurrent calls.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string name() const = 0;
    // Returns the assistant message text. Throws ProviderUnavailable.
    virtual std::string complete(const std::vector<ChatMessage>& messages) const = 0;
};

struct HttpChatConfig {
    std::string endpoint;  // e.g. https://host/v1/chat/completions
    std::string model;
    std::string api_key_env = "MERIT_LLM_API_KEY";
    double temperature = 0.0;
    http::RetryPolicy retry;
    std::chrono::milliseconds timeout{120000};
};

// POST {model, messages, temperature, response_format:{type:"json_object"}};
// reads choices[0].message.content.
class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(HttpChatConfig config);
    std::string name() const override { return "http:" + config_.model; }
    std::string complete(const std::vector<ChatMessage>& messages) const override;

    nlohmann::json request_body(const std::vector<ChatMessage>& messages) const;

private:
    HttpChatConfig config_;
};

// First balanced {...} object in `text` that parses as JSON, skipping braces
// inside string literals. Surrounding prose and code fences are ignored.
std::optional<nlohmann::json> extract_json_object(std::string_view text);

// Accepts numbers or numeric strings ("0.35", "35%").
std::optional<double> coerce_probability(const nlohmann::json& value);

}  // namespace pkt::llm
