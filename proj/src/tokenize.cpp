#include "scoreperf/tokenize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace {

using TM = TokenizerManifest;

// Exact rational center of a quarter-length bin: (k + 0.5) * 6/145.
Rational ql_center(int id) { return Rational(3 * (2 * std::int64_t(id) + 1), 145); }

void require_valid(const NoteSequence& seq, const char* op) {
    auto violations = validate(seq);
    if (!violations.empty()) {
        const Violation& v = violations.front();
        throw EncodeError(std::string(op) + ": invalid note " + std::to_string(v.note_index) +
                          " (" + v.field + "): " + v.message);
    }
}

const Vocabulary& find_vocab(const std::vector<Vocabulary>& vs, const char* name) {
    for (const Vocabulary& v : vs)
        if (v.name == name) return v;
    throw StateError(std::string("manifest missing vocabulary ") + name);
}

} // namespace

const char* to_string(TokenLayout layout) {
    switch (layout) {
        case TokenLayout::score_input: return "score_input";
        case TokenLayout::perf_input: return "perf_input";
        case TokenLayout::score_output: return "score_output";
        case TokenLayout::perf_output: return "perf_output";
    }
    return "?";
}

TokenLayout layout_from_string(const std::string& s) {
    if (s == "score_input") return TokenLayout::score_input;
    if (s == "perf_input") return TokenLayout::perf_input;
    if (s == "score_output") return TokenLayout::score_output;
    if (s == "perf_output") return TokenLayout::perf_output;
    throw DomainError("unknown token layout: " + s);
}

const std::vector<Vocabulary>& layout_vocabs(const TokenizerManifest& m, TokenLayout layout) {
    switch (layout) {
        case TokenLayout::score_input: return m.score_input;
        case TokenLayout::perf_input: return m.perf_input;
        case TokenLayout::score_output: return m.score_output;
        case TokenLayout::perf_output: return m.perf_output;
    }
    throw DomainError("unknown token layout");
}

TokenSequence encode_score_input(const NoteSequence& seq) {
    if (seq.kind != SeqKind::score) throw EncodeError("encode_score_input: expects a score");
    require_valid(seq, "encode_score_input");
    const TokenizerManifest& m = default_manifest();
    TokenSequence out;
    out.layout = TokenLayout::score_input;
    out.manifest = manifest_hash(m);
    out.streams.assign(7, {});
    for (auto& s : out.streams) s.reserve(seq.score.size());
    for (const ScoreNote& n : seq.score) {
        out.streams[0].push_back(quantize(n.onset_in_bar.to_double(), m.score_input[0]));
        out.streams[1].push_back(quantize(n.ioi.to_double(), m.score_input[1]));
        out.streams[2].push_back(n.pitch);
        out.streams[3].push_back(quantize(n.note_value.to_double(), m.score_input[3]));
        out.streams[4].push_back(n.measure_length
                                     ? quantize(n.measure_length->to_double(), m.score_input[4])
                                     : m.score_input[4].absent_id());
        out.streams[5].push_back(n.grace ? 1 : 0);
        out.streams[6].push_back(n.hand ? 1 : 0);
    }
    return out;
}

TokenSequence encode_perf_input(const NoteSequence& seq) {
    if (seq.kind != SeqKind::performance)
        throw EncodeError("encode_perf_input: expects a performance");
    require_valid(seq, "encode_perf_input");
    const TokenizerManifest& m = default_manifest();
    TokenSequence out;
    out.layout = TokenLayout::perf_input;
    out.manifest = manifest_hash(m);
    out.streams.assign(4, {});
    for (auto& s : out.streams) s.reserve(seq.perf.size());
    for (const PerformanceNote& n : seq.perf) {
        out.streams[0].push_back(n.pitch);
        out.streams[1].push_back(quantize(n.ioi, m.perf_input[1]));
        out.streams[2].push_back(quantize(n.duration, m.perf_input[2]));
        out.streams[3].push_back(quantize(double(n.velocity), m.perf_input[3]));
    }
    return out;
}

TokenSequence encode_score_output(const NoteSequence& seq) {
    if (seq.kind != SeqKind::score) throw EncodeError("encode_score_output: expects a score");
    require_valid(seq, "encode_score_output");
    const TokenizerManifest& m = default_manifest();
    TokenSequence out;
    out.layout = TokenLayout::score_output;
    out.manifest = manifest_hash(m);
    out.streams.assign(11, {});
    for (auto& s : out.streams) s.reserve(seq.score.size());
    for (std::size_t i = 0; i < seq.score.size(); ++i) {
        const ScoreNote& n = seq.score[i];
        if (n.voice < 1 || n.voice > 8)
            throw EncodeError("encode_score_output: note " + std::to_string(i) +
                              " voice outside [1,8]");
        out.streams[0].push_back(quantize(n.onset_in_bar.to_double(), m.score_output[0]));
        out.streams[1].push_back(n.pitch);
        out.streams[2].push_back(quantize(n.note_value.to_double(), m.score_output[2]));
        out.streams[3].push_back(n.measure_length
                                     ? quantize(n.measure_length->to_double(), m.score_output[3])
                                     : m.score_output[3].absent_id());
        out.streams[4].push_back(n.grace ? 1 : 0);
        out.streams[5].push_back(n.hand ? 1 : 0);
        out.streams[6].push_back(n.trill ? 1 : 0);
        out.streams[7].push_back(n.staccato ? 1 : 0);
        out.streams[8].push_back(n.voice - 1);
        out.streams[9].push_back(int(n.stem));
        out.streams[10].push_back(int(n.accidental));
    }
    return out;
}

TokenSequence encode_perf_output(const NoteSequence& seq) {
    if (seq.kind != SeqKind::performance)
        throw EncodeError("encode_perf_output: expects a performance");
    require_valid(seq, "encode_perf_output");
    const TokenizerManifest& m = default_manifest();
    const Vocabulary& vel_vocab = find_vocab(m.perf_output, "velocity");

    TokenSequence out;
    out.layout = TokenLayout::perf_output;
    out.manifest = manifest_hash(m);
    out.events.push_back(TM::kBos);

    double grid = m.grid_seconds();
    std::int64_t pos = 0; // grid steps
    for (std::size_t i = 0; i < seq.perf.size(); ++i) {
        const PerformanceNote& n = seq.perf[i];
        if (n.pitch < 21 || n.pitch > 108)
            throw EncodeError("encode_perf_output: note " + std::to_string(i) +
                              " pitch outside [21,108]");
        std::int64_t target = std::llround(n.onset / grid);
        std::int64_t delta = target - pos;
        while (delta > 0) {
            std::int64_t k = std::min<std::int64_t>(delta, m.time_shift_count);
            out.events.push_back(TM::kTimeShiftBase + int(k) - 1);
            delta -= k;
        }
        pos = target;

        out.events.push_back(TM::kNoteOnBase + n.pitch - 21);
        out.events.push_back(TM::kVelocityBase + quantize(double(n.velocity), vel_vocab));
        double dur_beats = n.duration / m.seconds_per_beat();
        std::int64_t step = std::llround(dur_beats / m.duration_step_beats) - 1;
        if (step < 0) step = 0;
        if (step > m.duration_steps - 1) step = m.duration_steps - 1;
        out.events.push_back(TM::kDurationBase + int(step));
    }
    return out;
}

namespace {

NoteSequence decode_score_input(const TokenSequence& t, const TokenizerManifest& m) {
    std::vector<ScoreNote> notes;
    notes.reserve(t.note_count());
    Rational onset(0);
    for (std::size_t i = 0; i < t.note_count(); ++i) {
        ScoreNote n;
        n.onset_in_bar = ql_center(t.streams[0][i]);
        n.ioi = i == 0 ? Rational(0) : ql_center(t.streams[1][i]);
        n.pitch = t.streams[2][i];
        n.note_value = ql_center(t.streams[3][i]);
        int ml = t.streams[4][i];
        if (ml != m.score_input[4].absent_id()) n.measure_length = ql_center(ml);
        n.grace = t.streams[5][i] != 0;
        n.hand = t.streams[6][i] != 0;
        onset = onset + n.ioi;
        n.onset = onset;
        notes.push_back(std::move(n));
    }
    return NoteSequence::make_score(std::move(notes));
}

NoteSequence decode_score_output(const TokenSequence& t, const TokenizerManifest& m) {
    std::vector<ScoreNote> notes;
    notes.reserve(t.note_count());
    Rational bar_start(0);
    Rational prev_in_bar(0);
    Rational prev_bar_len(4);
    for (std::size_t i = 0; i < t.note_count(); ++i) {
        ScoreNote n;
        n.onset_in_bar = ql_center(t.streams[0][i]);
        n.pitch = t.streams[1][i];
        n.note_value = ql_center(t.streams[2][i]);
        int ml = t.streams[3][i];
        if (ml != m.score_output[3].absent_id()) n.measure_length = ql_center(ml);
        n.grace = t.streams[4][i] != 0;
        n.hand = t.streams[5][i] != 0;
        n.trill = t.streams[6][i] != 0;
        n.staccato = t.streams[7][i] != 0;
        n.voice = t.streams[8][i] + 1;
        n.stem = Stem(t.streams[9][i]);
        n.accidental = Accidental(t.streams[10][i]);

        // A drop in onset-in-bar marks the next measure.
        if (i > 0 && n.onset_in_bar < prev_in_bar) bar_start = bar_start + prev_bar_len;
        n.onset = bar_start + n.onset_in_bar;
        prev_in_bar = n.onset_in_bar;
        prev_bar_len = n.measure_length.value_or(Rational(4));
        notes.push_back(std::move(n));
    }
    for (std::size_t i = 1; i < notes.size(); ++i) {
        Rational d = notes[i].onset - notes[i - 1].onset;
        notes[i].ioi = d < Rational(0) ? Rational(0) : d;
    }
    return NoteSequence::make_score(std::move(notes));
}

NoteSequence decode_perf_input(const TokenSequence& t, const TokenizerManifest& m) {
    std::vector<PerformanceNote> notes;
    notes.reserve(t.note_count());
    double onset = 0;
    for (std::size_t i = 0; i < t.note_count(); ++i) {
        PerformanceNote n;
        n.pitch = t.streams[0][i];
        n.ioi = i == 0 ? 0.0 : bin_center(t.streams[1][i], m.perf_input[1]);
        n.duration = bin_center(t.streams[2][i], m.perf_input[2]);
        n.velocity = int(std::lround(bin_center(t.streams[3][i], m.perf_input[3])));
        onset += n.ioi;
        n.onset = onset;
        notes.push_back(n);
    }
    return NoteSequence::make_performance(std::move(notes));
}

NoteSequence decode_perf_output(const TokenSequence& t, const TokenizerManifest& m) {
    const Vocabulary& vel_vocab = find_vocab(m.perf_output, "velocity");
    std::vector<PerformanceNote> notes;
    double grid = m.grid_seconds();
    std::int64_t pos = 0;
    enum class Expect { bos, shift_or_on, velocity, duration } expect = Expect::bos;
    bool padding = false;
    PerformanceNote pending;

    auto err = [](std::size_t i, const std::string& what) {
        throw DecodeError("perf_output: " + what + " at stream position " + std::to_string(i));
    };

    for (std::size_t i = 0; i < t.events.size(); ++i) {
        int id = t.events[i];
        if (id < 0 || id >= TM::kPerfVocabSize) err(i, "id out of vocabulary");
        if (padding) {
            if (id != TM::kPad) err(i, "content after PAD");
            continue;
        }
        if (expect == Expect::bos) {
            if (id != TM::kBos) err(i, "missing BOS");
            expect = Expect::shift_or_on;
            continue;
        }
        if (id == TM::kPad) {
            if (expect != Expect::shift_or_on) err(i, "PAD inside a note");
            padding = true;
            continue;
        }
        if (id == TM::kBos) err(i, "BOS after start");
        if (id >= TM::kTimeShiftBase) {
            if (expect != Expect::shift_or_on) err(i, "Time-Shift inside a note");
            pos += id - TM::kTimeShiftBase + 1;
        } else if (id >= TM::kDurationBase) {
            if (expect != Expect::duration) err(i, "Duration without Note-On/Velocity");
            double beats = (id - TM::kDurationBase + 1) * m.duration_step_beats;
            pending.duration = beats * m.seconds_per_beat();
            notes.push_back(pending);
            expect = Expect::shift_or_on;
        } else if (id >= TM::kVelocityBase) {
            if (expect != Expect::velocity) err(i, "Velocity without Note-On");
            pending.velocity =
                int(std::lround(bin_center(id - TM::kVelocityBase, vel_vocab)));
            expect = Expect::duration;
        } else {
            if (expect != Expect::shift_or_on) err(i, "Note-On inside a note");
            pending = PerformanceNote{};
            pending.pitch = 21 + (id - TM::kNoteOnBase);
            pending.onset = pos * grid;
            expect = Expect::velocity;
        }
    }
    if (expect == Expect::bos) throw DecodeError("perf_output: empty stream");
    if (expect != Expect::shift_or_on)
        throw DecodeError("perf_output: truncated note at stream end");

    for (std::size_t i = 0; i < notes.size(); ++i) {
        double d = i == 0 ? 0.0 : notes[i].onset - notes[i - 1].onset;
        notes[i].ioi = std::min(std::max(d, 0.0), 8.0);
    }
    return NoteSequence::make_performance(std::move(notes));
}

} // namespace

NoteSequence decode(const TokenSequence& tokens) {
    const TokenizerManifest& m = default_manifest();
    if (tokens.parallel()) {
        const std::vector<Vocabulary>& vocabs = layout_vocabs(m, tokens.layout);
        if (tokens.streams.size() != vocabs.size())
            throw DecodeError("decode: stream count mismatch for layout " +
                              std::string(to_string(tokens.layout)));
        for (std::size_t s = 0; s < tokens.streams.size(); ++s) {
            if (tokens.streams[s].size() != tokens.streams[0].size())
                throw DecodeError("decode: unequal stream lengths");
            for (std::size_t i = 0; i < tokens.streams[s].size(); ++i) {
                int id = tokens.streams[s][i];
                if (id < 0 || id >= vocabs[s].size)
                    throw DecodeError("decode: id " + std::to_string(id) +
                                      " out of range for " + vocabs[s].name + " at note " +
                                      std::to_string(i));
            }
        }
    }
    switch (tokens.layout) {
        case TokenLayout::score_input: return decode_score_input(tokens, m);
        case TokenLayout::score_output: return decode_score_output(tokens, m);
        case TokenLayout::perf_input: return decode_perf_input(tokens, m);
        case TokenLayout::perf_output: return decode_perf_output(tokens, m);
    }
    throw DecodeError("decode: bad layout");
}

std::string format_tokens(const TokenSequence& tokens) {
    std::ostringstream os;
    std::size_t n = tokens.parallel() ? tokens.note_count() : tokens.event_count();
    os << "scoreperf-tokens v1 layout=" << to_string(tokens.layout)
       << " manifest=" << tokens.manifest << " n=" << n << "\n";
    if (tokens.parallel()) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t s = 0; s < tokens.streams.size(); ++s) {
                if (s) os << '\t';
                os << tokens.streams[s][i];
            }
            os << '\n';
        }
    } else {
        for (int id : tokens.events) os << id << '\n';
    }
    return os.str();
}

TokenSequence parse_tokens(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    if (!std::getline(is, header)) throw ParseError("tokens: empty input");
    std::istringstream hs(header);
    std::string magic, version, kv;
    hs >> magic >> version;
    if (magic != "scoreperf-tokens" || version != "v1")
        throw ParseError("tokens: bad header '" + header + "'");
    TokenSequence out;
    std::size_t n = 0;
    bool have_layout = false, have_n = false;
    while (hs >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("tokens: bad header field '" + kv + "'");
        std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "layout") {
            out.layout = layout_from_string(value);
            have_layout = true;
        } else if (key == "manifest") {
            out.manifest = value;
        } else if (key == "n") {
            n = std::stoull(value);
            have_n = true;
        } else {
            throw ParseError("tokens: unknown header field '" + key + "'");
        }
    }
    if (!have_layout || !have_n) throw ParseError("tokens: header missing layout or n");

    const TokenizerManifest& m = default_manifest();
    std::string expected = manifest_hash(m);
    if (out.manifest != expected)
        throw StateError("tokens: manifest hash " + out.manifest +
                         " does not match this build's tokenizer (" + expected + ")");

    const std::vector<Vocabulary>& vocabs = layout_vocabs(m, out.layout);
    if (out.parallel()) out.streams.assign(vocabs.size(), {});
    std::string line;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (out.parallel()) {
            for (std::size_t s = 0; s < vocabs.size(); ++s) {
                long id;
                if (!(ls >> id))
                    throw ParseError("tokens: row " + std::to_string(rows) + " has fewer than " +
                                     std::to_string(vocabs.size()) + " ids");
                if (id < 0 || id >= vocabs[s].size)
                    throw ParseError("tokens: id " + std::to_string(id) + " out of range for " +
                                     vocabs[s].name);
                out.streams[s].push_back(int(id));
            }
            long extra;
            if (ls >> extra) throw ParseError("tokens: row " + std::to_string(rows) + " too long");
        } else {
            long id;
            if (!(ls >> id)) throw ParseError("tokens: bad event line '" + line + "'");
            if (id < 0 || id >= TM::kPerfVocabSize)
                throw ParseError("tokens: event id " + std::to_string(id) + " out of range");
            out.events.push_back(int(id));
        }
        ++rows;
    }
    if (rows != n)
        throw ParseError("tokens: header n=" + std::to_string(n) + " but parsed " +
                         std::to_string(rows) + " rows");
    return out;
}

void save_tokens(const std::string& path, const TokenSequence& tokens) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << format_tokens(tokens);
}

TokenSequence load_tokens(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_tokens(ss.str());
}

} // namespace scoreperf
