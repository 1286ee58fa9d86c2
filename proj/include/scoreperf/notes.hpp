#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scoreperf/rational.hpp"

namespace scoreperf {

enum class Stem { up, down, none };
enum class Accidental { double_flat, flat, natural, sharp, double_sharp, none };

const char* to_string(Stem s);
const char* to_string(Accidental a);
Stem stem_from_string(const std::string& s);
Accidental accidental_from_string(const std::string& s);

// One note of symbolic notation. Quarter-length attributes live in [0, 6];
// `onset` is the absolute position in quarter lengths, derived once at
// ingestion and kept alongside ioi so reordering never has to re-derive it.
struct ScoreNote {
    Rational onset;                    // absolute, cached (not an input attribute)
    Rational onset_in_bar;             // [0, 6]
    Rational ioi;                      // [0, 6], 0 for the first note
    int pitch = 60;                    // [0, 127]
    Rational note_value;               // [0, 6]; 0 for grace notes
    std::optional<Rational> measure_length; // [0, 6] or absent
    bool grace = false;
    bool hand = false;                 // false = upper staff, true = lower staff

    // Output-only attributes (defaults per the output vocabularies).
    bool trill = false;
    bool staccato = false;
    int voice = 1;                     // [1, 8]
    Stem stem = Stem::none;
    Accidental accidental = Accidental::none;
};

// One note of an expressive performance, in seconds. `onset` is cached
// cumulative time from the first note.
struct PerformanceNote {
    double onset = 0.0;
    int pitch = 60;      // [0, 127]
    double ioi = 0.0;    // [0, 8] s
    double duration = 0.0; // [0, 8] s, pedal-extended
    int velocity = 64;   // [0, 127]
};

enum class SeqKind { score, performance };

// Homogeneous ordered sequence of notes; only the vector matching `kind`
// may be populated.
struct NoteSequence {
    SeqKind kind = SeqKind::score;
    std::vector<ScoreNote> score;
    std::vector<PerformanceNote> perf;

    size_t size() const { return kind == SeqKind::score ? score.size() : perf.size(); }
    bool empty() const { return size() == 0; }

    static NoteSequence make_score(std::vector<ScoreNote> n) {
        NoteSequence s; s.kind = SeqKind::score; s.score = std::move(n); return s;
    }
    static NoteSequence make_performance(std::vector<PerformanceNote> n) {
        NoteSequence s; s.kind = SeqKind::performance; s.perf = std::move(n); return s;
    }
};

struct Violation {
    size_t note_index = 0;
    std::string field;
    std::string message;
};

// Stable sort by (onset, pitch) and recompute ioi from the sorted onsets.
// Throws EmptySequence on empty input. Pure; returns a new sequence.
NoteSequence canonicalize(const NoteSequence& seq);

// Range checks for every type invariant. Violations are data, not errors.
std::vector<Violation> validate(const NoteSequence& seq);

} // namespace scoreperf
