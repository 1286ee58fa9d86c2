#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "scoreperf/notes.hpp"
#include "scoreperf/rng.hpp"
#include "scoreperf/tensor.hpp"

namespace scoreperf::test {

inline bool close(double a, double b, double tol = 1e-9) { return std::fabs(a - b) <= tol; }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Fresh scratch directory under the system temp root, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("scoreperf-test-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Deterministic little score: `n` notes alternating between staves, eighth
// notes in 4/4, pitches walking from 60.
inline NoteSequence tiny_score(int n) {
    std::vector<ScoreNote> notes;
    for (int i = 0; i < n; ++i) {
        ScoreNote s;
        s.onset = Rational(i, 2);
        s.onset_in_bar = Rational((i % 8), 2);
        s.ioi = i == 0 ? Rational(0) : Rational(1, 2);
        s.pitch = 60 + (i * 2) % 12;
        s.note_value = Rational(1, 2);
        s.measure_length = Rational(4);
        s.hand = i % 4 == 3;
        s.voice = s.hand ? 2 : 1;
        s.stem = s.hand ? Stem::down : Stem::up;
        notes.push_back(s);
    }
    return NoteSequence::make_score(std::move(notes));
}

// Matching deadpan performance at 120 BPM on the tokenizer grids.
inline NoteSequence tiny_perf(int n) {
    std::vector<PerformanceNote> notes;
    for (int i = 0; i < n; ++i) {
        PerformanceNote p;
        p.onset = 0.25 * i;
        p.ioi = i == 0 ? 0.0 : 0.25;
        p.pitch = 60 + (i * 2) % 12;
        p.duration = 0.25;
        p.velocity = 64;
        notes.push_back(p);
    }
    return NoteSequence::make_performance(std::move(notes));
}

} // namespace scoreperf::test
