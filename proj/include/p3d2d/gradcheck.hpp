#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Finite-difference verification of every primitive op and of the shrunken
// end-to-end model, all in 64-bit mode.

namespace p3d2d {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double threshold = 1e-4;
    bool pass = false;
};

std::vector<GradCheckEntry> run_gradcheck(std::uint32_t seed, std::ostream* out = nullptr);

bool gradcheck_passed(const std::vector<GradCheckEntry>& entries);

}  // namespace p3d2d
