#pragma once

#include <cstddef>

#include "scoreperf/notes.hpp"

namespace scoreperf {

// Circular distance on the circle of fifths: min(|k−k̂|, |k−k̂+12|, |k−k̂−12|).
// Both arguments must lie in [-7, 7]; the result lies in [0, 6].
int key_distance(int notated, int estimated);

// Krumhansl–Schmuckler profile correlation over the duration-weighted
// pitch-class histogram of score notes in [begin, end). Returns the fifths
// value of the best-matching major or minor key signature. Ties break toward
// smaller |fifths|, then positive fifths, then major over minor.
int estimate_key(const NoteSequence& seq, std::size_t begin, std::size_t end);

// Convenience overload over the whole sequence.
int estimate_key(const NoteSequence& seq);

} // namespace scoreperf
