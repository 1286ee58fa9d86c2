#include "scoreperf/key.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace {

// Krumhansl & Kessler (1982) probe-tone ratings, indexed from the tonic.
constexpr std::array<double, 12> kMajorProfile = {
    6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88};
constexpr std::array<double, 12> kMinorProfile = {
    6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17};

double pearson(const std::array<double, 12>& x, const std::array<double, 12>& profile,
               int tonic) {
    double xm = 0, ym = 0;
    for (int i = 0; i < 12; ++i) {
        xm += x[i];
        ym += profile[i];
    }
    xm /= 12;
    ym /= 12;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < 12; ++i) {
        double dx = x[i] - xm;
        double dy = profile[((i - tonic) % 12 + 12) % 12] - ym;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0 || syy <= 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

int key_distance(int notated, int estimated) {
    if (notated < -7 || notated > 7) throw DomainError("key_distance: notated fifths out of [-7,7]");
    if (estimated < -7 || estimated > 7)
        throw DomainError("key_distance: estimated fifths out of [-7,7]");
    int diff = notated - estimated;
    int d = std::abs(diff);
    d = std::min(d, std::abs(diff + 12));
    d = std::min(d, std::abs(diff - 12));
    return d;
}

int estimate_key(const NoteSequence& seq, std::size_t begin, std::size_t end) {
    if (seq.kind != SeqKind::score) throw DomainError("estimate_key: expects a score sequence");
    if (begin >= end || end > seq.score.size())
        throw EmptySequence("estimate_key: empty segment");

    std::array<double, 12> hist{};
    double total = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const ScoreNote& n = seq.score[i];
        double w = n.note_value.to_double();
        hist[((n.pitch % 12) + 12) % 12] += w;
        total += w;
    }
    if (total <= 0) {
        // Grace-only segments carry no duration weight; fall back to counts.
        hist.fill(0);
        for (std::size_t i = begin; i < end; ++i)
            hist[((seq.score[i].pitch % 12) + 12) % 12] += 1.0;
    }

    // Candidate order realizes the tie-break: smaller |fifths| first, positive
    // before negative, major before minor; only strictly better scores win.
    int best_fifths = 0;
    double best_r = -2.0;
    for (int mag = 0; mag <= 6; ++mag) {
        for (int sign : {+1, -1}) {
            if (mag == 0 && sign < 0) continue;
            int fifths = sign * mag;
            int major_tonic = ((7 * fifths) % 12 + 12) % 12;
            int minor_tonic = (major_tonic + 9) % 12;
            double r_major = pearson(hist, kMajorProfile, major_tonic);
            if (r_major > best_r) {
                best_r = r_major;
                best_fifths = fifths;
            }
            double r_minor = pearson(hist, kMinorProfile, minor_tonic);
            if (r_minor > best_r) {
                best_r = r_minor;
                best_fifths = fifths;
            }
        }
    }
    return best_fifths;
}

int estimate_key(const NoteSequence& seq) {
    return estimate_key(seq, 0, seq.score.size());
}

} // namespace scoreperf
