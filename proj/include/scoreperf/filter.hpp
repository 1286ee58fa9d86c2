#pragma once

#include <string>
#include <vector>

#include "scoreperf/musicxml.hpp"
#include "scoreperf/notes.hpp"

namespace scoreperf {

struct FilterReport {
    bool accepted = false;
    std::vector<std::string> failed_rules;
    double key_distance = 0.0; // mean of per-segment distances
    std::vector<int> per_segment_distances;
};

// Applies the corpus admission rules: exactly two staves, at least 100 notes,
// at least 10 bars, at most 64 notes in any bar, sane time signatures
// (1..16 beats over 2/4/8/16/32), and notated key signatures within [-7,7]
// whose mean circular distance to the estimated keys is at most 1.
FilterReport filter_score(const NoteSequence& seq, const ScoreMetadata& meta);

std::string to_json(const FilterReport& report);

} // namespace scoreperf
