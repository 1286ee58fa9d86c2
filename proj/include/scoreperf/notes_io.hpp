#pragma once

#include <iosfwd>
#include <string>

#include "scoreperf/notes.hpp"

namespace scoreperf {

// Line-delimited text format: a header line, then one note per line with
// tab-separated fields in type-definition order.
//   score: onset_in_bar ioi pitch note_value measure_length grace hand
//          trill staccato voice stem accidental
//   perf:  pitch ioi duration velocity
// Rationals print as "n" or "n/d"; an absent measure_length prints as "-".
// Absolute onsets are reconstructed from the cumulative ioi on read.
void write_notes(std::ostream& os, const NoteSequence& seq);
NoteSequence read_notes(std::istream& is);

void save_notes(const std::string& path, const NoteSequence& seq);
NoteSequence load_notes(const std::string& path);

std::string format_double(double x); // shortest round-trip decimal

} // namespace scoreperf
