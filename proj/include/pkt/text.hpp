#pragma once
// Sequence serialization and semantic denoising (the token filter applied
// before any embedding or lexical matching).

#include <string>
#include <string_view>
#include <vector>

#include "pkt/types.hpp"

namespace pkt::text {

// One line per interaction:
//   Q: <exercise_text> | concepts: <tags> | difficulty: <d, 2dp> | result: <correct|incorrect>
// The concepts segment is omitted when the interaction has no tags.
std::string serialize_interaction(const Interaction& interaction);
std::string serialize_sequence(const StudentSequence& sequence);

// Splits on whitespace and punctuation; keeps units made only of Unicode
// letters with at least two code points, lowercased, in order.
std::vector<std::string> denoise(std::string_view text);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

// denoise(serialize_sequence(seq))
std::vector<std::string> sequence_tokens(const StudentSequence& sequence);

}  // namespace pkt::text
