#include "scoreperf/notes.hpp"

#include <algorithm>
#include <cmath>

#include "scoreperf/errors.hpp"

namespace scoreperf {

const char* to_string(Stem s) {
    switch (s) {
        case Stem::up: return "up";
        case Stem::down: return "down";
        default: return "none";
    }
}

const char* to_string(Accidental a) {
    switch (a) {
        case Accidental::double_flat: return "double-flat";
        case Accidental::flat: return "flat";
        case Accidental::natural: return "natural";
        case Accidental::sharp: return "sharp";
        case Accidental::double_sharp: return "double-sharp";
        default: return "none";
    }
}

Stem stem_from_string(const std::string& s) {
    if (s == "up") return Stem::up;
    if (s == "down") return Stem::down;
    if (s == "none") return Stem::none;
    throw DomainError("unknown stem value: " + s);
}

Accidental accidental_from_string(const std::string& s) {
    if (s == "double-flat" || s == "flat-flat") return Accidental::double_flat;
    if (s == "flat") return Accidental::flat;
    if (s == "natural") return Accidental::natural;
    if (s == "sharp") return Accidental::sharp;
    if (s == "double-sharp" || s == "sharp-sharp") return Accidental::double_sharp;
    if (s == "none") return Accidental::none;
    throw DomainError("unknown accidental value: " + s);
}

Rational Rational::parse(const std::string& s) {
    auto integer = [&](const std::string& part) {
        std::size_t used = 0;
        std::int64_t v = 0;
        try {
            v = std::stoll(part, &used);
        } catch (const std::exception&) {
            throw ParseError("bad rational '" + s + "'");
        }
        if (used != part.size()) throw ParseError("bad rational '" + s + "'");
        return v;
    };
    auto slash = s.find('/');
    if (slash == std::string::npos) return Rational(integer(s));
    return Rational(integer(s.substr(0, slash)), integer(s.substr(slash + 1)));
}

NoteSequence canonicalize(const NoteSequence& seq) {
    if (seq.empty()) throw EmptySequence("canonicalize: empty sequence");
    NoteSequence out = seq;
    if (out.kind == SeqKind::score) {
        std::stable_sort(out.score.begin(), out.score.end(),
                         [](const ScoreNote& a, const ScoreNote& b) {
                             if (a.onset != b.onset) return a.onset < b.onset;
                             return a.pitch < b.pitch;
                         });
        out.score[0].ioi = Rational(0);
        for (size_t i = 1; i < out.score.size(); ++i)
            out.score[i].ioi = out.score[i].onset - out.score[i - 1].onset;
    } else {
        std::stable_sort(out.perf.begin(), out.perf.end(),
                         [](const PerformanceNote& a, const PerformanceNote& b) {
                             if (a.onset != b.onset) return a.onset < b.onset;
                             return a.pitch < b.pitch;
                         });
        out.perf[0].ioi = 0.0;
        for (size_t i = 1; i < out.perf.size(); ++i)
            out.perf[i].ioi = out.perf[i].onset - out.perf[i - 1].onset;
    }
    return out;
}

namespace {

void check_ql(std::vector<Violation>& v, size_t i, const char* field, const Rational& r) {
    if (r < Rational(0) || r > Rational(6))
        v.push_back({i, field, field + std::string(" = ") + r.str() + " outside [0, 6]"});
}

void check_int(std::vector<Violation>& v, size_t i, const char* field, int x, int lo, int hi) {
    if (x < lo || x > hi)
        v.push_back({i, field, field + std::string(" = ") + std::to_string(x) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]"});
}

void check_sec(std::vector<Violation>& v, size_t i, const char* field, double x) {
    if (!(x >= 0.0 && x <= 8.0))
        v.push_back({i, field, field + std::string(" = ") + std::to_string(x) + " outside [0, 8]"});
}

} // namespace

std::vector<Violation> validate(const NoteSequence& seq) {
    std::vector<Violation> v;
    if (seq.kind == SeqKind::score) {
        if (!seq.perf.empty()) v.push_back({0, "kind", "score sequence holds performance notes"});
        for (size_t i = 0; i < seq.score.size(); ++i) {
            const ScoreNote& n = seq.score[i];
            check_ql(v, i, "onset_in_bar", n.onset_in_bar);
            check_ql(v, i, "ioi", n.ioi);
            check_ql(v, i, "note_value", n.note_value);
            if (n.measure_length) check_ql(v, i, "measure_length", *n.measure_length);
            check_int(v, i, "pitch", n.pitch, 0, 127);
            check_int(v, i, "voice", n.voice, 1, 8);
            if (i > 0) {
                const ScoreNote& p = seq.score[i - 1];
                if (n.onset < p.onset || (n.onset == p.onset && n.pitch < p.pitch))
                    v.push_back({i, "order", "sequence not ordered by (onset, pitch)"});
            }
        }
    } else {
        if (!seq.score.empty()) v.push_back({0, "kind", "performance sequence holds score notes"});
        for (size_t i = 0; i < seq.perf.size(); ++i) {
            const PerformanceNote& n = seq.perf[i];
            check_sec(v, i, "ioi", n.ioi);
            check_sec(v, i, "duration", n.duration);
            check_int(v, i, "pitch", n.pitch, 0, 127);
            check_int(v, i, "velocity", n.velocity, 0, 127);
            if (i > 0) {
                const PerformanceNote& p = seq.perf[i - 1];
                if (n.onset < p.onset || (n.onset == p.onset && n.pitch < p.pitch))
                    v.push_back({i, "order", "sequence not ordered by (onset, pitch)"});
            }
        }
    }
    return v;
}

} // namespace scoreperf
