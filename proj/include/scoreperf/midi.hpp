#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreperf/notes.hpp"

namespace scoreperf {

struct MidiParseResult {
    NoteSequence seq;                  // canonical performance sequence
    std::vector<std::string> warnings; // dangling note-ons, skipped events
    size_t note_count = 0;             // note on/off pairs found (pre-clamp)
};

// Standard MIDI File parser, formats 0 and 1, PPQ division. Extracts one
// PerformanceNote per note-on/off pair; duration extends to the earlier of
// sustain-pedal release (CC64 >= 64 held at note-off) or the next same-pitch
// onset. Onsets are shifted so the first note starts at 0 s and all values
// clamp to the type ranges.
MidiParseResult parse_midi(const std::vector<std::uint8_t>& bytes);
MidiParseResult parse_midi_file(const std::string& path);

// Format-0 writer used by the render pipeline: fixed tempo, channel 0,
// note events from the sequence. Deterministic byte output.
std::vector<std::uint8_t> write_midi(const NoteSequence& perf, double bpm = 120.0,
                                     int ppq = 480);
void write_midi_file(const std::string& path, const NoteSequence& perf, double bpm = 120.0,
                     int ppq = 480);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

} // namespace scoreperf
