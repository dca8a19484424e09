#pragma once

// SPEC1 grid dump: magic "SPEC1\n", one flag byte (bit 0: phase block
// present), u32 LE dims F and N, then F*N little-endian float32 row-major
// magnitudes, optionally followed by an equal-sized phase block (radians).

#include <optional>
#include <string>

#include "mbs/dsp.hpp"

namespace mbs {

void write_spec1(const std::string& path, const Grid& magnitude,
                 const Grid* phase = nullptr);

struct Spec1File {
    Grid magnitude;
    std::optional<Grid> phase;
};

Spec1File read_spec1(const std::string& path);

}  // namespace mbs
