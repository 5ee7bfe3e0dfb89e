#include "pkt/prompts.hpp"

#include <fmt/format.h>

#include "pkt/calibration.hpp"
#include "pkt/error.hpp"
#include "pkt/text.hpp"
#include "prompt_assets.hpp"

namespace pkt::prompts {

std::string_view template_text(std::string_view name) {
    for (const auto& asset : assets::kPromptAssets) {
        if (asset.name == name) return asset.text;
    }
    throw usage_error("UnknownTemplate", fmt::format("no prompt template named '{}'", name));
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::string calibrated_interaction(const Interaction& interaction) {
    std::string line = "Q: " + interaction.exercise_text();
    if (!interaction.concept_tags().empty()) line += " | concepts: " + text::join(interaction.concept_tags(), ", ");
    line += fmt::format(" | difficulty: {} | result: {}", to_string(difficulty_tag(interaction.difficulty())),
                        interaction.correct() ? "correct" : "incorrect");
    return line;
}

std::string calibrated_history(const StudentSequence& sequence) {
    std::string out;
    std::size_t n = 0;
    for (const auto& it : sequence.interactions()) {
        if (n) out.push_back('\n');
        out += fmt::format("{}. {}", ++n, calibrated_interaction(it));
    }
    return out;
}

std::string tuple_history(const StudentSequence& sequence) {
    std::string out = "[";
    bool first = true;
    for (const auto& it : sequence.interactions()) {
        if (!first) out += ", ";
        first = false;
        out += fmt::format("(\"{}\", {}, {:.2f})", it.exercise_text(), it.correct() ? 1 : 0, it.difficulty());
    }
    return out + "]";
}

std::string schema_discovery_prompt(const StudentSequence& sequence) {
    return render(template_text("schema_discovery"), {{"student_sequence", tuple_history(sequence)}});
}

std::string paradigm_prompt(const StudentSequence& history, const Interaction& target, bool outcome) {
    std::string lines;
    std::size_t n = 0;
    for (const auto& it : history.interactions()) {
        if (n) lines.push_back('\n');
        lines += fmt::format("{}. {} (difficulty {:.2f})", ++n, calibrated_interaction(it), it.difficulty());
    }
    const auto target_line = fmt::format("Q: {}{} | difficulty: {} ({:.2f})", target.exercise_text(),
                                         target.concept_tags().empty()
                                             ? std::string()
                                             : " | concepts: " + text::join(target.concept_tags(), ", "),
                                         to_string(difficulty_tag(target.difficulty())), target.difficulty());
    return render(template_text("paradigm_construction"),
                  {{"student_history", lines}, {"target_question", target_line}, {"ground_truth", outcome ? "1" : "0"}});
}

}  // namespace pkt::prompts
