#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreperf/musicxml.hpp"
#include "scoreperf/notes.hpp"

namespace scoreperf {

struct SyntheticOptions {
    int pieces = 4;
    int bars = 2;              // 4/4 bars per piece
    std::uint64_t seed = 1;
    bool filter_grade = false; // large enough to pass every corpus filter rule
};

// One generated piece: a two-staff C-major score, a paired performance whose
// timing/velocity sit exactly on the tokenizer grids, and the style class
// (tempo/dynamics family) the performance was drawn from.
struct SyntheticPiece {
    std::string name;
    NoteSequence score;
    NoteSequence perf;
    ScoreMetadata meta;
    int style_class = 0;
};

std::vector<SyntheticPiece> gen_synthetic(const SyntheticOptions& opt);

} // namespace scoreperf
