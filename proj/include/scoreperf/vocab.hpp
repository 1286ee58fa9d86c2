#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace scoreperf {

// A named, ordered bin specification mapping one attribute to token ids.
struct Vocabulary {
    enum class Kind {
        uniform_bins,  // left-closed uniform bins over [lo, hi]; last bin right-closed
        integer_range, // identity ids for integers starting at int_lo
        categorical,   // explicit label list; id = index
        steps,         // id k represents the value (k + 1) * step
    };

    std::string name;
    Kind kind = Kind::uniform_bins;
    int size = 0; // total id count, including any absent/special ids

    double lo = 0.0, hi = 0.0;
    int bins = 0; // uniform_bins only
    long long int_lo = 0;
    std::vector<std::string> values;
    double step = 0.0;
    bool has_absent = false; // one extra id == bins marking "no value"

    std::vector<std::pair<std::string, int>> specials; // name -> id

    double bin_width() const { return (hi - lo) / bins; }
    int absent_id() const { return bins; }
};

// id = clamp(floor((value - lo) / width), 0, bins - 1); non-finite -> DomainError.
int quantize(double value, const Vocabulary& vocab);

// Center of bin `id` (uniform_bins), the integer value (integer_range),
// or the step value (steps).
double bin_center(int id, const Vocabulary& vocab);

// The frozen tokenizer tables plus the perf-output event grid.
struct TokenizerManifest {
    std::vector<Vocabulary> score_input;  // onset_in_bar, ioi, pitch, note_value,
                                          // measure_length, grace, hand
    std::vector<Vocabulary> perf_input;   // pitch, ioi, duration, velocity
    std::vector<Vocabulary> score_output; // input columns minus ioi, plus trill,
                                          // staccato, voice, stem, accidental
    std::vector<Vocabulary> perf_output;  // special, note_on, velocity, duration,
                                          // time_shift families over one flat id space

    double reference_bpm = 120.0;
    int beat_resolution = 24; // time-shift grid positions per beat
    int time_shift_count = 192;
    int duration_steps = 32;
    double duration_step_beats = 0.125;

    // Flat perf-output id layout.
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kNoteOnBase = 2;    // 88 ids, pitches [21, 108]
    static constexpr int kVelocityBase = 90; // 32 bins over [0, 127]
    static constexpr int kDurationBase = 122;
    static constexpr int kTimeShiftBase = 154;
    static constexpr int kPerfVocabSize = 346;

    double seconds_per_beat() const { return 60.0 / reference_bpm; }
    double grid_seconds() const { return seconds_per_beat() / beat_resolution; }
};

const TokenizerManifest& default_manifest();

std::string manifest_json(const TokenizerManifest& m);

std::uint64_t fnv1a64(std::string_view bytes);

// 16-hex-digit FNV-1a of the manifest JSON; embedded in token files and
// checkpoints so mismatched vocabularies are refused.
std::string manifest_hash(const TokenizerManifest& m);

} // namespace scoreperf
