#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "scoreperf/notes.hpp"

namespace scoreperf {

namespace xml {

// Small DOM for the uncompressed MusicXML subset. Handles prolog, DOCTYPE,
// comments, attributes, character entities and CDATA; no namespaces.
struct Node {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attrs;
    std::vector<Node> children;
    std::string text;

    const Node* child(std::string_view n) const;
    std::string attr(std::string_view n) const;
    const std::string& child_text(std::string_view n, const std::string& fallback = "") const;
};

Node parse(std::string_view src);

} // namespace xml

struct TimeSignature {
    int beats = 4;
    int beat_type = 4;
    Rational measure_quarters() const { return Rational(4 * beats, beat_type); }
};

struct KeySegment {
    int fifths = 0;
    size_t start_note = 0; // [start, end) in canonical note order
    size_t end_note = 0;
};

struct ScoreMetadata {
    int staves = 0;
    int bar_count = 0;
    int max_notes_per_bar = 0;
    std::vector<TimeSignature> time_signatures; // every distinct signature event
    std::vector<KeySegment> key_segments;       // key-stable regions, in note order
};

struct ParsedScore {
    NoteSequence seq; // canonical score sequence
    ScoreMetadata meta;
    std::vector<std::string> warnings;
};

// Parse a part-wise MusicXML document covering the supported subset: notes,
// chords, rests, grace notes, ties, voices, staves, stems, accidentals,
// trill/staccato marks, backup/forward, time and key signatures. Anything
// else is skipped with a warning.
ParsedScore parse_musicxml(const std::string& text);
ParsedScore parse_musicxml_file(const std::string& path);

// Emit the transcription subset: one piano part, two staves, measures laid
// out from each note's absolute onset and the active measure length.
std::string write_musicxml(const NoteSequence& score);
void write_musicxml_file(const std::string& path, const NoteSequence& score);

// (step, alter, octave) spelling for a MIDI pitch honouring the requested
// accidental where representable.
struct SpelledPitch { char step; int alter; int octave; };
SpelledPitch spell_pitch(int midi_pitch, Accidental acc);

} // namespace scoreperf
