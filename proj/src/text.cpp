#include "pkt/text.hpp"

#include <locale>
#include <optional>

#include <fmt/format.h>

namespace pkt::text {

namespace {

// Unicode classification through the C.UTF-8 locale's wide ctype facet.
// When that locale is missing, non-ASCII code points count as letters.
class CharClass {
public:
    CharClass() {
        for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
            try {
                locale_.emplace(name);
                break;
            } catch (const std::runtime_error&) {
            }
        }
        if (locale_) facet_ = &std::use_facet<std::ctype<wchar_t>>(*locale_);
    }

    bool is_alpha(char32_t c) const {
        if (c < 0x80) return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        if (facet_) return facet_->is(std::ctype_base::alpha, static_cast<wchar_t>(c));
        return c != 0xFFFD;
    }

    bool is_digit(char32_t c) const {
        if (c < 0x80) return c >= '0' && c <= '9';
        if (facet_) return facet_->is(std::ctype_base::digit, static_cast<wchar_t>(c));
        return false;
    }

    char32_t lower(char32_t c) const {
        if (c < 0x80) return (c >= 'A' && c <= 'Z') ? c + 32 : c;
        if (facet_) return static_cast<char32_t>(facet_->tolower(static_cast<wchar_t>(c)));
        return c;
    }

private:
    std::optional<std::locale> locale_;
    const std::ctype<wchar_t>* facet_ = nullptr;
};

const CharClass& char_class() {
    static const CharClass instance;
    return instance;
}

// Decodes one UTF-8 code point; invalid sequences yield U+FFFD and consume one byte.
char32_t decode(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    auto cont = [&](std::size_t k) -> int {
        if (i + k >= s.size()) return -1;
        const auto b = static_cast<unsigned char>(s[i + k]);
        return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    for (int k = 1; k < len; ++k) {
        const int c = cont(static_cast<std::size_t>(k));
        if (c < 0) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | static_cast<char32_t>(c);
    }
    i += static_cast<std::size_t>(len);
    return cp;
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace

std::string serialize_interaction(const Interaction& interaction) {
    std::string line = "Q: " + interaction.exercise_text();
    if (!interaction.concept_tags().empty()) line += " | concepts: " + join(interaction.concept_tags(), ", ");
    line += fmt::format(" | difficulty: {:.2f} | result: {}", interaction.difficulty(),
                        interaction.correct() ? "correct" : "incorrect");
    return line;
}

std::string serialize_sequence(const StudentSequence& sequence) {
    std::string out;
    for (const auto& it : sequence.interactions()) {
        if (!out.empty()) out.push_back('\n');
        out += serialize_interaction(it);
    }
    return out;
}

std::vector<std::string> denoise(std::string_view text) {
    const auto& cc = char_class();
    std::vector<std::string> tokens;
    std::string unit;
    std::size_t letters = 0;
    bool alpha_only = true;
    auto flush = [&] {
        if (letters >= 2 && alpha_only) tokens.push_back(unit);
        unit.clear();
        letters = 0;
        alpha_only = true;
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = decode(text, i);
        if (cc.is_alpha(cp)) {
            encode(cc.lower(cp), unit);
            ++letters;
        } else if (cc.is_digit(cp)) {
            // Digits stay inside the unit so "abc123" is dropped whole.
            alpha_only = false;
            ++letters;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::string join(const std::vector<std::string>& tokens, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> sequence_tokens(const StudentSequence& sequence) {
    return denoise(serialize_sequence(sequence));
}

}  // namespace pkt::text
