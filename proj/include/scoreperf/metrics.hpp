#pragma once

#include <limits>
#include <string>
#include <vector>

#include "scoreperf/notes.hpp"
#include "scoreperf/tensor.hpp"

namespace scoreperf {

struct AlignmentOptions {
    double gap_cost = 1.0;
    double onset_window = std::numeric_limits<double>::infinity();
    bool require_pitch = true; // pitches must be equal to pair
};

// Monotone one-to-one correspondence between two note lists.
struct NoteAlignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (ref, hyp)
    std::vector<std::size_t> unmatched_ref;
    std::vector<std::size_t> unmatched_hyp;
    double total_cost = 0.0;
};

// Global dynamic-programming alignment minimizing sum of |onset difference|
// over pairs plus gap_cost per unmatched note. Ties prefer matching, then
// skipping the reference note.
NoteAlignment align_events(const std::vector<double>& ref_onsets,
                           const std::vector<int>& ref_pitches,
                           const std::vector<double>& hyp_onsets,
                           const std::vector<int>& hyp_pitches, const AlignmentOptions& opt);

// Kind-specific defaults: scores align on quarter-length onsets with gap
// cost 1; performances on seconds with gap cost 0.25 and a 250 ms window.
NoteAlignment align_notes(const NoteSequence& ref, const NoteSequence& hyp);

// Transcription error rates on symbolic scores, as percentages.
struct MusterReport {
    double e_p = 0;      // pitch substitutions (onset-only alignment) / |ref|
    double e_miss = 0;   // unmatched ref / |ref|
    double e_extra = 0;  // unmatched hyp / |ref|
    double e_onset = 0;  // matched pairs off the 16th-note grid by > 1 unit
    double e_offset = 0; // same for onset + duration
    double e_avg = 0;    // mean of the five
};
MusterReport muster(const NoteSequence& ref, const NoteSequence& hyp);

// Notation-attribute error rates over matched pairs, as percentages.
struct ScoreSimilarityReport {
    double e_miss = 0;
    double e_extra = 0;
    double e_dur = 0;   // note_value mismatch
    double e_staff = 0; // hand mismatch
    double e_stem = 0;
    double e_spell = 0; // accidental mismatch
};
ScoreSimilarityReport score_similarity(const NoteSequence& ref, const NoteSequence& hyp);

// Note-level rendering accuracy under a 250 ms onset window, as percentages.
struct AlignStats {
    double align = 0;  // matched / |ref|
    double insert_ = 0; // unmatched hyp / |hyp|
    double miss = 0;   // unmatched ref / |ref|
};
AlignStats epr_accuracy(const NoteSequence& ref, const NoteSequence& hyp);

// Distributional comparison of two performances.
struct DistStats {
    double var_onset = 0;    // variance of hyp onset deviation from the 16th grid
    double var_duration = 0; // variance of hyp durations
    double var_velocity = 0; // variance of hyp velocities
    double kl_duration = 0;  // KL(hyp || ref), 32-bin histograms over the ref range
    double kl_velocity = 0;
    double mae_duration = 0; // over matched pairs
    double mae_velocity = 0;
};
DistStats dist_stats(const NoteSequence& ref, const NoteSequence& hyp);

// Pairwise note-aligned differences between renditions of one score; note
// correspondence goes through each rendition's alignment to the score.
struct DiversityReport {
    Tensor mae_duration; // [R, R], symmetric, zero diagonal
    Tensor mae_velocity;
    double avg_duration = 0; // mean over the strict upper triangle
    double avg_velocity = 0;
};
DiversityReport diversity_mae(const NoteSequence& score,
                              const std::vector<NoteSequence>& renditions);

// Nominal deadpan performance of a score at the reference tempo (120 BPM).
NoteSequence nominal_performance(const NoteSequence& score);

struct MetricReport {
    MusterReport muster;
    ScoreSimilarityReport score_sim;
    AlignStats align_stats;
    DistStats dist;
    bool has_muster = false, has_score_sim = false, has_align = false, has_dist = false;
};

std::string to_json(const MetricReport& r);
std::string csv_header();
std::string to_csv_row(const MetricReport& r);

} // namespace scoreperf
