#pragma once
// Prompt templates (text assets under assets/prompts, compiled in) and the
// renderers for schema summarization and paradigm annotation.

#include <map>
#include <string>
#include <string_view>

#include "pkt/types.hpp"

namespace pkt::prompts {

inline constexpr std::string_view kTemplateVersion = "v1";

// Asset names: schema_discovery, paradigm_construction, online_inference,
// paradigm_block, spike_rule.
std::string_view template_text(std::string_view name);

// Replaces each {key} with its value. Braces that do not name a key are
// left alone, so literal JSON examples survive.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

// "1. Q: ... | difficulty: [EASY] | result: correct" per interaction.
std::string calibrated_history(const StudentSequence& sequence);
std::string calibrated_interaction(const Interaction& interaction);

// [("Fraction Addition", 1, 0.3), ...]
std::string tuple_history(const StudentSequence& sequence);

std::string schema_discovery_prompt(const StudentSequence& sequence);
std::string paradigm_prompt(const StudentSequence& history, const Interaction& target, bool outcome);

}  // namespace pkt::prompts
