#include "scoreperf/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "scoreperf/errors.hpp"
#include "scoreperf/rng.hpp"
#include "scoreperf/vocab.hpp"

namespace scoreperf {

namespace {

constexpr int kScale[7] = {0, 2, 4, 5, 7, 9, 11}; // C major pitch classes

int scale_pitch(int base, int degree) {
    int octave = degree / 7, idx = degree % 7;
    if (idx < 0) {
        idx += 7;
        --octave;
    }
    return base + 12 * octave + kScale[idx];
}

// Velocity at the center of bin `id`, so encoding recovers the same id.
int velocity_of_bin(int id) {
    const Vocabulary& v = default_manifest().perf_output[2];
    return int(std::lround((double(id) + 0.5) * v.bin_width()));
}

NoteSequence make_performance(const NoteSequence& score, int style_class, Rng& rng) {
    // Class 0 plays at the notated tempo with bright dynamics; class 1
    // stretches time by 5/4 and plays softer with longer articulation.
    double stretch = style_class == 0 ? 1.0 : 1.25;
    int vel_base = style_class == 0 ? 21 : 9;
    double spb = default_manifest().seconds_per_beat();
    double dur_step = default_manifest().duration_step_beats * spb;

    std::vector<PerformanceNote> notes;
    notes.reserve(score.score.size());
    for (const ScoreNote& n : score.score) {
        PerformanceNote p;
        p.onset = n.onset.to_double() * spb * stretch;
        p.pitch = n.pitch;
        int k = int(std::lround(n.note_value.to_double() * stretch / 0.125)) - 1;
        if (n.staccato) k = k / 2;
        p.duration = double(std::clamp(k, 0, 31) + 1) * dur_step;
        int vid = std::clamp(vel_base + int(rng.range(-2, 2)), 0, 31);
        p.velocity = velocity_of_bin(vid);
        notes.push_back(p);
    }
    for (std::size_t i = 1; i < notes.size(); ++i)
        notes[i].ioi = std::clamp(notes[i].onset - notes[i - 1].onset, 0.0, 8.0);
    return NoteSequence::make_performance(std::move(notes));
}

} // namespace

std::vector<SyntheticPiece> gen_synthetic(const SyntheticOptions& opt) {
    if (opt.pieces < 1) throw ConfigError("gen_synthetic: pieces must be >= 1");
    int bars = opt.filter_grade ? std::max(opt.bars, 12) : opt.bars;
    if (bars < 1) throw ConfigError("gen_synthetic: bars must be >= 1");

    Rng master(opt.seed);
    std::vector<SyntheticPiece> out;
    out.reserve(std::size_t(opt.pieces));

    for (int p = 0; p < opt.pieces; ++p) {
        Rng rng = master.fork();
        SyntheticPiece piece;
        piece.style_class = p % 2;
        char buf[32];
        std::snprintf(buf, sizeof buf, "piece-%03d", p);
        piece.name = buf;

        // Two registers per style class so a score encoder can tell the
        // families apart; both stay inside the piano range and in C major.
        int melody_base = piece.style_class == 0 ? 60 : 72;
        int bass_base = piece.style_class == 0 ? 36 : 48;

        std::vector<ScoreNote> notes;
        int degree = int(rng.range(0, 6));
        for (int bar = 0; bar < bars; ++bar) {
            Rational bar_start(4 * bar);
            for (int beat2 = 0; beat2 < 2; ++beat2) { // two half-note bass tones
                ScoreNote n;
                n.onset = bar_start + Rational(2 * beat2);
                n.onset_in_bar = Rational(2 * beat2);
                n.pitch = scale_pitch(bass_base, int(rng.range(0, 6)));
                n.note_value = Rational(2);
                n.measure_length = Rational(4);
                n.hand = true;
                n.voice = 2;
                n.stem = Stem::down;
                notes.push_back(n);
            }
            for (int e = 0; e < 8; ++e) { // eighth-note melody
                ScoreNote n;
                n.onset = bar_start + Rational(e, 2);
                n.onset_in_bar = Rational(e, 2);
                degree += int(rng.range(-2, 2));
                degree = std::clamp(degree, 0, 13);
                n.pitch = scale_pitch(melody_base, degree);
                n.note_value = Rational(1, 2);
                n.measure_length = Rational(4);
                n.hand = false;
                n.voice = 1;
                n.stem = Stem::up;
                n.staccato = (bar * 8 + e) % 7 == 6;
                notes.push_back(n);
            }
        }
        piece.score = canonicalize(NoteSequence::make_score(std::move(notes)));
        piece.perf = make_performance(piece.score, piece.style_class, rng);

        piece.meta.staves = 2;
        piece.meta.bar_count = bars;
        piece.meta.max_notes_per_bar = 10;
        piece.meta.time_signatures = {TimeSignature{4, 4}};
        piece.meta.key_segments = {KeySegment{0, 0, piece.score.size()}};
        out.push_back(std::move(piece));
    }
    return out;
}

} // namespace scoreperf
