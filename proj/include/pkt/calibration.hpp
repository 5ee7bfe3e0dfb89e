#pragma once

#include "pkt/types.hpp"

namespace pkt {

inline constexpr double kEasyBelow = 0.35;
inline constexpr double kHardFrom = 0.70;

// [EASY] below 0.35, [MEDIUM] below 0.70, [HARD] otherwise. Throws
// OutOfRange outside [0,1].
DifficultyTag difficulty_tag(double difficulty);

}  // namespace pkt
