#include "pkt/calibration.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pkt/error.hpp"

namespace pkt {

DifficultyTag difficulty_tag(double difficulty) {
    if (!std::isfinite(difficulty) || difficulty < 0.0 || difficulty > 1.0) {
        throw data_error("OutOfRange", fmt::format("difficulty {} outside [0,1]", difficulty));
    }
    if (difficulty < kEasyBelow) return DifficultyTag::Easy;
    if (difficulty < kHardFrom) return DifficultyTag::Medium;
    return DifficultyTag::Hard;
}

}  // namespace pkt
