#include "scoreperf/notes_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "scoreperf/errors.hpp"

namespace scoreperf {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    // Prefer the shortest representation that still round-trips.
    for (int prec = 1; prec < 17; ++prec) {
        char probe[40];
        std::snprintf(probe, sizeof probe, "%.*g", prec, x);
        double back = 0.0;
        std::sscanf(probe, "%lf", &back);
        if (back == x) return probe;
    }
    return buf;
}

void write_notes(std::ostream& os, const NoteSequence& seq) {
    os << "scoreperf-notes v1 kind="
       << (seq.kind == SeqKind::score ? "score" : "performance") << " n=" << seq.size() << "\n";
    if (seq.kind == SeqKind::score) {
        for (const ScoreNote& n : seq.score) {
            os << n.onset_in_bar.str() << '\t' << n.ioi.str() << '\t' << n.pitch << '\t'
               << n.note_value.str() << '\t'
               << (n.measure_length ? n.measure_length->str() : std::string("-")) << '\t'
               << int(n.grace) << '\t' << int(n.hand) << '\t' << int(n.trill) << '\t'
               << int(n.staccato) << '\t' << n.voice << '\t' << to_string(n.stem) << '\t'
               << to_string(n.accidental) << "\n";
        }
    } else {
        for (const PerformanceNote& n : seq.perf) {
            os << n.pitch << '\t' << format_double(n.ioi) << '\t' << format_double(n.duration)
               << '\t' << n.velocity << "\n";
        }
    }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') { out.push_back(cur); cur.clear(); }
        else cur.push_back(c);
    }
    out.push_back(cur);
    return out;
}

} // namespace

NoteSequence read_notes(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw ParseError("notes file: missing header");
    if (header.rfind("scoreperf-notes v1 ", 0) != 0)
        throw ParseError("notes file: bad header: " + header);
    bool is_score = header.find("kind=score") != std::string::npos;
    if (!is_score && header.find("kind=performance") == std::string::npos)
        throw ParseError("notes file: header lacks kind");

    NoteSequence seq;
    seq.kind = is_score ? SeqKind::score : SeqKind::performance;
    std::string line;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_tabs(line);
        try {
            if (is_score) {
                if (f.size() != 12)
                    throw ParseError("expected 12 fields, got " + std::to_string(f.size()));
                ScoreNote n;
                n.onset_in_bar = Rational::parse(f[0]);
                n.ioi = Rational::parse(f[1]);
                n.pitch = std::stoi(f[2]);
                n.note_value = Rational::parse(f[3]);
                if (f[4] != "-") n.measure_length = Rational::parse(f[4]);
                n.grace = f[5] == "1";
                n.hand = f[6] == "1";
                n.trill = f[7] == "1";
                n.staccato = f[8] == "1";
                n.voice = std::stoi(f[9]);
                n.stem = stem_from_string(f[10]);
                n.accidental = accidental_from_string(f[11]);
                n.onset = seq.score.empty() ? n.ioi : seq.score.back().onset + n.ioi;
                seq.score.push_back(n);
            } else {
                if (f.size() != 4)
                    throw ParseError("expected 4 fields, got " + std::to_string(f.size()));
                PerformanceNote n;
                n.pitch = std::stoi(f[0]);
                n.ioi = std::stod(f[1]);
                n.duration = std::stod(f[2]);
                n.velocity = std::stoi(f[3]);
                n.onset = seq.perf.empty() ? n.ioi : seq.perf.back().onset + n.ioi;
                seq.perf.push_back(n);
            }
        } catch (const std::exception& e) {
            throw ParseError("notes file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return seq;
}

void save_notes(const std::string& path, const NoteSequence& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    write_notes(os, seq);
}

NoteSequence load_notes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    return read_notes(is);
}

} // namespace scoreperf
