#include "scoreperf/musicxml.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace xml {

namespace {

struct Cursor {
    std::string_view s;
    size_t p = 0;

    bool eof() const { return p >= s.size(); }
    char peek() const { return s[p]; }
    bool starts(std::string_view t) const { return s.substr(p, t.size()) == t; }
    void expect(char c) {
        if (eof() || s[p] != c) throw ParseError("xml: expected '" + std::string(1, c) + "'", p);
        ++p;
    }
    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(s[p]))) ++p;
    }
};

std::string decode_entities(std::string_view in, size_t base) {
    std::string out;
    out.reserve(in.size());
    for (size_t i = 0; i < in.size(); ++i) {
        if (in[i] != '&') { out.push_back(in[i]); continue; }
        size_t semi = in.find(';', i);
        if (semi == std::string_view::npos) throw ParseError("xml: unterminated entity", base + i);
        std::string_view ent = in.substr(i + 1, semi - i - 1);
        if (ent == "amp") out.push_back('&');
        else if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "apos") out.push_back('\'');
        else if (ent == "quot") out.push_back('"');
        else if (!ent.empty() && ent[0] == '#') {
            long code = ent[1] == 'x' || ent[1] == 'X'
                            ? std::strtol(std::string(ent.substr(2)).c_str(), nullptr, 16)
                            : std::strtol(std::string(ent.substr(1)).c_str(), nullptr, 10);
            if (code <= 0 || code > 0x10ffff) throw ParseError("xml: bad character reference", base + i);
            // UTF-8 encode.
            if (code < 0x80) out.push_back(char(code));
            else if (code < 0x800) {
                out.push_back(char(0xc0 | (code >> 6)));
                out.push_back(char(0x80 | (code & 0x3f)));
            } else if (code < 0x10000) {
                out.push_back(char(0xe0 | (code >> 12)));
                out.push_back(char(0x80 | ((code >> 6) & 0x3f)));
                out.push_back(char(0x80 | (code & 0x3f)));
            } else {
                out.push_back(char(0xf0 | (code >> 18)));
                out.push_back(char(0x80 | ((code >> 12) & 0x3f)));
                out.push_back(char(0x80 | ((code >> 6) & 0x3f)));
                out.push_back(char(0x80 | (code & 0x3f)));
            }
        } else {
            throw ParseError("xml: unknown entity &" + std::string(ent) + ";", base + i);
        }
        i = semi;
    }
    return out;
}

bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' ||
           c == '.';
}

std::string read_name(Cursor& c) {
    size_t start = c.p;
    while (!c.eof() && name_char(c.peek())) ++c.p;
    if (c.p == start) throw ParseError("xml: expected name", c.p);
    return std::string(c.s.substr(start, c.p - start));
}

void skip_misc(Cursor& c) {
    for (;;) {
        c.skip_ws();
        if (c.starts("<?")) {
            size_t e = c.s.find("?>", c.p);
            if (e == std::string_view::npos) throw ParseError("xml: unterminated processing instruction", c.p);
            c.p = e + 2;
        } else if (c.starts("<!--")) {
            size_t e = c.s.find("-->", c.p);
            if (e == std::string_view::npos) throw ParseError("xml: unterminated comment", c.p);
            c.p = e + 3;
        } else if (c.starts("<!")) {
            // DOCTYPE; skip to matching '>' (internal subsets use brackets).
            int depth = 0;
            while (!c.eof()) {
                char ch = c.s[c.p++];
                if (ch == '[') ++depth;
                else if (ch == ']') --depth;
                else if (ch == '>' && depth == 0) break;
            }
        } else {
            return;
        }
    }
}

Node parse_element(Cursor& c) {
    c.expect('<');
    Node node;
    node.name = read_name(c);
    for (;;) {
        c.skip_ws();
        if (c.eof()) throw ParseError("xml: unterminated tag", c.p);
        if (c.starts("/>")) { c.p += 2; return node; }
        if (c.peek() == '>') { ++c.p; break; }
        std::string aname = read_name(c);
        c.skip_ws();
        c.expect('=');
        c.skip_ws();
        char q = c.peek();
        if (q != '"' && q != '\'') throw ParseError("xml: attribute value must be quoted", c.p);
        ++c.p;
        size_t vstart = c.p;
        size_t vend = c.s.find(q, vstart);
        if (vend == std::string_view::npos) throw ParseError("xml: unterminated attribute", vstart);
        node.attrs.emplace_back(aname, decode_entities(c.s.substr(vstart, vend - vstart), vstart));
        c.p = vend + 1;
    }
    // Content.
    for (;;) {
        if (c.eof()) throw ParseError("xml: unterminated element <" + node.name + ">", c.p);
        if (c.starts("<![CDATA[")) {
            size_t e = c.s.find("]]>", c.p + 9);
            if (e == std::string_view::npos) throw ParseError("xml: unterminated CDATA", c.p);
            node.text.append(c.s.substr(c.p + 9, e - c.p - 9));
            c.p = e + 3;
        } else if (c.starts("<!--")) {
            size_t e = c.s.find("-->", c.p);
            if (e == std::string_view::npos) throw ParseError("xml: unterminated comment", c.p);
            c.p = e + 3;
        } else if (c.starts("</")) {
            c.p += 2;
            std::string closing = read_name(c);
            if (closing != node.name)
                throw ParseError("xml: mismatched </" + closing + ">, open <" + node.name + ">", c.p);
            c.skip_ws();
            c.expect('>');
            return node;
        } else if (c.starts("<?")) {
            size_t e = c.s.find("?>", c.p);
            if (e == std::string_view::npos) throw ParseError("xml: unterminated processing instruction", c.p);
            c.p = e + 2;
        } else if (c.peek() == '<') {
            node.children.push_back(parse_element(c));
        } else {
            size_t start = c.p;
            while (!c.eof() && c.peek() != '<') ++c.p;
            node.text.append(decode_entities(c.s.substr(start, c.p - start), start));
        }
    }
}

} // namespace

const Node* Node::child(std::string_view n) const {
    for (const Node& ch : children)
        if (ch.name == n) return &ch;
    return nullptr;
}

std::string Node::attr(std::string_view n) const {
    for (const auto& [k, v] : attrs)
        if (k == n) return v;
    return "";
}

const std::string& Node::child_text(std::string_view n, const std::string& fallback) const {
    const Node* ch = child(n);
    return ch ? ch->text : fallback;
}

Node parse(std::string_view src) {
    Cursor c{src};
    if (c.starts("\xef\xbb\xbf")) c.p += 3; // UTF-8 BOM
    skip_misc(c);
    if (c.eof() || c.peek() != '<') throw ParseError("xml: no root element", c.p);
    Node root = parse_element(c);
    skip_misc(c);
    return root;
}

} // namespace xml

namespace {

std::string trimmed(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& s, const char* what) {
    try {
        return std::stoi(trimmed(s));
    } catch (...) {
        throw ParseError(std::string("musicxml: bad integer for ") + what + ": '" + s + "'");
    }
}

int step_semitone(char step) {
    switch (step) {
        case 'C': return 0;
        case 'D': return 2;
        case 'E': return 4;
        case 'F': return 5;
        case 'G': return 7;
        case 'A': return 9;
        case 'B': return 11;
        default: throw ParseError(std::string("musicxml: bad step '") + step + "'");
    }
}

Rational clamp_ql(Rational r, std::vector<std::string>& warnings, const char* what) {
    if (r < Rational(0)) {
        warnings.push_back(std::string("musicxml: negative ") + what + " clamped to 0");
        return Rational(0);
    }
    if (r > Rational(6)) {
        warnings.push_back(std::string("musicxml: ") + what + " " + r.str() + " clamped to 6");
        return Rational(6);
    }
    return r;
}

struct KeyChange {
    Rational time;
    int fifths;
};

} // namespace

ParsedScore parse_musicxml(const std::string& text) {
    xml::Node root = xml::parse(text);
    if (root.name != "score-partwise")
        throw ParseError("musicxml: expected <score-partwise>, got <" + root.name + ">");

    ParsedScore out;
    std::vector<ScoreNote> notes;
    std::vector<KeyChange> key_changes;
    std::map<std::pair<int, int>, int> staves_seen; // (part index, staff) -> 1
    std::map<int, int> notes_per_bar;
    std::map<std::pair<int, int>, size_t> open_ties; // (pitch, staff) -> note index
    int part_index = 0;
    int bar_count = 0;

    // Active signatures carry across parts so segment bookkeeping stays
    // consistent; real piano scores have a single part anyway.
    for (const xml::Node& part : root.children) {
        if (part.name != "part") continue;
        int divisions = 0;
        TimeSignature timesig;
        bool have_timesig = false;
        Rational measure_start(0);
        int measure_index = 0;

        for (const xml::Node& measure : part.children) {
            if (measure.name != "measure") continue;
            std::int64_t cursor = 0;    // division units within the measure
            std::int64_t last_main = 0; // onset of last non-chord note, for <chord/>

            for (const xml::Node& el : measure.children) {
                if (el.name == "attributes") {
                    if (const xml::Node* d = el.child("divisions"))
                        divisions = to_int(d->text, "divisions");
                    if (const xml::Node* k = el.child("key")) {
                        int fifths = to_int(k->child_text("fifths", "0"), "fifths");
                        Rational t = measure_start + (divisions > 0 ? Rational(cursor, divisions)
                                                                    : Rational(0));
                        if (key_changes.empty() || key_changes.back().fifths != fifths)
                            key_changes.push_back({t, fifths});
                    }
                    if (const xml::Node* t = el.child("time")) {
                        timesig.beats = to_int(t->child_text("beats", "4"), "beats");
                        timesig.beat_type = to_int(t->child_text("beat-type", "4"), "beat-type");
                        have_timesig = true;
                        if (part_index == 0) out.meta.time_signatures.push_back(timesig);
                    }
                    if (const xml::Node* s = el.child("staves")) {
                        int n = to_int(s->text, "staves");
                        for (int i = 1; i <= n; ++i) staves_seen[{part_index, i}] = 1;
                    }
                } else if (el.name == "backup") {
                    if (divisions <= 0) throw ParseError("musicxml: backup before divisions");
                    cursor -= to_int(el.child_text("duration", "0"), "backup duration");
                    if (cursor < 0) cursor = 0;
                } else if (el.name == "forward") {
                    if (divisions <= 0) throw ParseError("musicxml: forward before divisions");
                    cursor += to_int(el.child_text("duration", "0"), "forward duration");
                } else if (el.name == "note") {
                    bool is_grace = el.child("grace") != nullptr;
                    bool is_chord = el.child("chord") != nullptr;
                    bool is_rest = el.child("rest") != nullptr;
                    std::int64_t dur = 0;
                    if (!is_grace) {
                        const xml::Node* d = el.child("duration");
                        if (!d) {
                            out.warnings.push_back("musicxml: note without duration skipped");
                            continue;
                        }
                        if (divisions <= 0)
                            throw ParseError("musicxml: note duration before divisions");
                        dur = to_int(d->text, "duration");
                    }

                    std::int64_t at = is_chord ? last_main : cursor;
                    if (is_rest) {
                        if (!is_chord) { last_main = cursor; cursor += dur; }
                        continue;
                    }

                    const xml::Node* pitch = el.child("pitch");
                    if (!pitch) {
                        out.warnings.push_back("musicxml: unpitched note skipped");
                        if (!is_chord && !is_grace) { last_main = cursor; cursor += dur; }
                        continue;
                    }
                    std::string step = trimmed(pitch->child_text("step", "C"));
                    int alter = pitch->child("alter")
                                    ? to_int(pitch->child_text("alter"), "alter") : 0;
                    int octave = to_int(pitch->child_text("octave", "4"), "octave");
                    int midi = 12 * (octave + 1) + step_semitone(step.empty() ? 'C' : step[0]) + alter;
                    midi = std::clamp(midi, 0, 127);

                    int staff = el.child("staff")
                                    ? to_int(el.child_text("staff"), "staff") : 1;
                    staves_seen[{part_index, staff}] = 1;

                    Rational onset_in_bar =
                        divisions > 0 ? Rational(at, divisions) : Rational(0);
                    Rational note_value =
                        is_grace ? Rational(0)
                                 : (divisions > 0 ? Rational(dur, divisions) : Rational(0));
                    Rational abs_onset = measure_start + onset_in_bar;

                    bool tie_stop = false, tie_start = false;
                    for (const xml::Node& ch : el.children) {
                        if (ch.name == "tie") {
                            if (ch.attr("type") == "stop") tie_stop = true;
                            if (ch.attr("type") == "start") tie_start = true;
                        }
                    }

                    if (tie_stop) {
                        auto it = open_ties.find({midi, staff});
                        if (it != open_ties.end()) {
                            ScoreNote& head = notes[it->second];
                            head.note_value = clamp_ql(head.note_value + note_value,
                                                       out.warnings, "tied note_value");
                            if (!tie_start) open_ties.erase(it);
                            if (!is_chord && !is_grace) { last_main = at; cursor = at + dur; }
                            continue;
                        }
                        out.warnings.push_back("musicxml: tie stop without open tie");
                    }

                    ScoreNote n;
                    n.onset = abs_onset;
                    n.onset_in_bar = clamp_ql(onset_in_bar, out.warnings, "onset_in_bar");
                    n.pitch = midi;
                    n.note_value = clamp_ql(note_value, out.warnings, "note_value");
                    if (have_timesig)
                        n.measure_length =
                            clamp_ql(timesig.measure_quarters(), out.warnings, "measure_length");
                    n.grace = is_grace;
                    n.hand = staff >= 2;
                    n.voice = std::clamp(
                        el.child("voice") ? to_int(el.child_text("voice"), "voice") : 1, 1, 8);
                    std::string stem = trimmed(el.child_text("stem", ""));
                    n.stem = stem == "up" ? Stem::up : stem == "down" ? Stem::down : Stem::none;
                    std::string acc = trimmed(el.child_text("accidental", ""));
                    if (!acc.empty()) {
                        try {
                            n.accidental = accidental_from_string(acc);
                        } catch (const DomainError&) {
                            out.warnings.push_back("musicxml: accidental '" + acc + "' ignored");
                        }
                    }
                    if (const xml::Node* notations = el.child("notations")) {
                        if (const xml::Node* orn = notations->child("ornaments"))
                            if (orn->child("trill-mark")) n.trill = true;
                        if (const xml::Node* art = notations->child("articulations"))
                            if (art->child("staccato")) n.staccato = true;
                    }

                    if (tie_start) open_ties[{midi, staff}] = notes.size();
                    notes.push_back(n);
                    notes_per_bar[bar_count + measure_index] += 1;
                    if (!is_chord && !is_grace) { last_main = at; cursor = at + dur; }
                } else if (el.name == "print" || el.name == "barline" || el.name == "direction" ||
                           el.name == "sound" || el.name == "harmony") {
                    // Layout and expressive directions are outside the subset.
                } else {
                    out.warnings.push_back("musicxml: skipped <" + el.name + ">");
                }
            }

            measure_start = measure_start +
                            (have_timesig ? timesig.measure_quarters() : Rational(4));
            ++measure_index;
        }
        if (part_index == 0) bar_count = measure_index;
        ++part_index;
    }

    if (notes.empty()) throw ParseError("musicxml: no notes found");

    out.meta.staves = int(staves_seen.size());
    out.meta.bar_count = bar_count;
    for (const auto& [bar, count] : notes_per_bar)
        out.meta.max_notes_per_bar = std::max(out.meta.max_notes_per_bar, count);
    if (out.meta.time_signatures.empty()) out.meta.time_signatures.push_back(TimeSignature{});

    // Segment boundaries are temporal; note ranges come from canonical order.
    NoteSequence seq = canonicalize(NoteSequence::make_score(std::move(notes)));
    if (key_changes.empty()) key_changes.push_back({Rational(0), 0});
    std::vector<KeySegment> segments;
    for (size_t k = 0; k < key_changes.size(); ++k) {
        KeySegment seg;
        seg.fifths = key_changes[k].fifths;
        seg.start_note = segments.empty() ? 0 : segments.back().end_note;
        size_t e = seg.start_note;
        if (k + 1 < key_changes.size()) {
            const Rational& boundary = key_changes[k + 1].time;
            while (e < seq.score.size() && seq.score[e].onset < boundary) ++e;
        } else {
            e = seq.score.size();
        }
        seg.end_note = e;
        if (seg.end_note > seg.start_note || segments.empty()) segments.push_back(seg);
        else segments.back().fifths = seg.fifths; // empty segment: merge forward
    }
    segments.back().end_note = seq.score.size();
    out.meta.key_segments = std::move(segments);
    out.seq = std::move(seq);
    return out;
}

ParsedScore parse_musicxml_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_musicxml(ss.str());
}

SpelledPitch spell_pitch(int midi_pitch, Accidental acc) {
    static const char steps[7] = {'C', 'D', 'E', 'F', 'G', 'A', 'B'};
    static const int semis[7] = {0, 2, 4, 5, 7, 9, 11};
    int alter = 0;
    bool fixed = true;
    switch (acc) {
        case Accidental::double_flat: alter = -2; break;
        case Accidental::flat: alter = -1; break;
        case Accidental::natural: alter = 0; break;
        case Accidental::sharp: alter = 1; break;
        case Accidental::double_sharp: alter = 2; break;
        case Accidental::none: fixed = false; break;
    }
    int pc = ((midi_pitch % 12) + 12) % 12;
    if (fixed) {
        for (int i = 0; i < 7; ++i) {
            if (((semis[i] + alter) % 12 + 12) % 12 == pc) {
                int octave = (midi_pitch - semis[i] - alter) / 12 - 1;
                return {steps[i], alter, octave};
            }
        }
    }
    // Default spelling: naturals, black keys as sharps.
    static const int def_step[12] = {0, 0, 1, 1, 2, 3, 3, 4, 4, 5, 5, 6};
    static const int def_alter[12] = {0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 1, 0};
    int i = def_step[pc];
    return {steps[i], def_alter[pc], (midi_pitch - semis[i] - def_alter[pc]) / 12 - 1};
}

std::string write_musicxml(const NoteSequence& score) {
    if (score.kind != SeqKind::score) throw DomainError("write_musicxml: not a score");
    if (score.empty()) throw EmptySequence("write_musicxml: empty sequence");

    const int divisions = 480;
    Rational ml = score.score.front().measure_length.value_or(Rational(4));
    if (ml <= Rational(0)) ml = Rational(4);
    int beats = 4, beat_type = 4;
    if (ml.den == 1) { beats = int(ml.num); beat_type = 4; }
    else if ((ml * Rational(2)).den == 1) { beats = int((ml * Rational(2)).num); beat_type = 8; }

    bool two_staves = false;
    for (const ScoreNote& n : score.score) two_staves = two_staves || n.hand;

    auto div_of = [&](const Rational& q) {
        return std::int64_t(std::llround(q.to_double() * divisions));
    };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<score-partwise version=\"4.0\">\n"
       << "  <part-list>\n"
       << "    <score-part id=\"P1\"><part-name>Piano</part-name></score-part>\n"
       << "  </part-list>\n"
       << "  <part id=\"P1\">\n";

    std::int64_t ml_div = div_of(ml);
    if (ml_div <= 0) ml_div = 4 * divisions;
    size_t i = 0;
    int bar = 0;
    static const char* acc_names[6] = {"flat-flat", "flat", "natural", "sharp", "double-sharp", ""};
    while (i < score.score.size()) {
        os << "    <measure number=\"" << (bar + 1) << "\">\n";
        if (bar == 0) {
            os << "      <attributes>\n"
               << "        <divisions>" << divisions << "</divisions>\n"
               << "        <key><fifths>0</fifths></key>\n"
               << "        <time><beats>" << beats << "</beats><beat-type>" << beat_type
               << "</beat-type></time>\n";
            if (two_staves) os << "        <staves>2</staves>\n";
            os << "      </attributes>\n";
        }
        std::int64_t bar_start = std::int64_t(bar) * ml_div;
        std::int64_t bar_end = bar_start + ml_div;
        std::int64_t cursor = bar_start;
        std::int64_t prev_onset = -1;
        while (i < score.score.size()) {
            const ScoreNote& n = score.score[i];
            std::int64_t at = div_of(n.onset);
            if (at >= bar_end) break;
            bool chord = at == prev_onset;
            if (!chord && at > cursor)
                os << "      <forward><duration>" << (at - cursor) << "</duration></forward>\n";
            if (!chord && at < cursor)
                os << "      <backup><duration>" << (cursor - at) << "</duration></backup>\n";
            SpelledPitch sp = spell_pitch(n.pitch, n.accidental);
            std::int64_t dur = std::max<std::int64_t>(1, div_of(n.note_value));
            os << "      <note>";
            if (chord) os << "<chord/>";
            if (n.grace) os << "<grace/>";
            os << "<pitch><step>" << sp.step << "</step>";
            if (sp.alter != 0) os << "<alter>" << sp.alter << "</alter>";
            os << "<octave>" << sp.octave << "</octave></pitch>";
            if (!n.grace) os << "<duration>" << dur << "</duration>";
            os << "<voice>" << n.voice << "</voice>";
            if (n.stem != Stem::none) os << "<stem>" << to_string(n.stem) << "</stem>";
            if (n.accidental != Accidental::none)
                os << "<accidental>" << acc_names[int(n.accidental)] << "</accidental>";
            if (two_staves) os << "<staff>" << (n.hand ? 2 : 1) << "</staff>";
            if (n.trill || n.staccato) {
                os << "<notations>";
                if (n.trill) os << "<ornaments><trill-mark/></ornaments>";
                if (n.staccato) os << "<articulations><staccato/></articulations>";
                os << "</notations>";
            }
            os << "</note>\n";
            if (!chord && !n.grace) cursor = at + dur;
            if (!n.grace) prev_onset = at;
            ++i;
        }
        os << "    </measure>\n";
        ++bar;
    }
    os << "  </part>\n</score-partwise>\n";
    return os.str();
}

void write_musicxml_file(const std::string& path, const NoteSequence& score) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << write_musicxml(score);
}

} // namespace scoreperf
