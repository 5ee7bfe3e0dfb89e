#pragma once

#include <stdexcept>
#include <string>

namespace pkt {

// Broad error families; the CLI maps these onto exit codes.
enum class ErrorKind {
    Usage,     // bad flags, bad config
    Data,      // malformed input, violated invariants, degenerate splits
    Provider,  // embedding / LLM transport failures
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Short machine-readable name, e.g. "MissingColumn".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

inline Error data_error(std::string code, const std::string& message) {
    return Error(ErrorKind::Data, std::move(code), message);
}

inline Error provider_error(std::string code, const std::string& message) {
    return Error(ErrorKind::Provider, std::move(code), message);
}

inline Error usage_error(std::string code, const std::string& message) {
    return Error(ErrorKind::Usage, std::move(code), message);
}

}  // namespace pkt
