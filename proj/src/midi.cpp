#include "scoreperf/midi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace {

struct Event {
    std::int64_t tick = 0;
    int type = 0; // 0 = note-off, 1 = note-on, 2 = cc64, 3 = tempo
    int channel = 0;
    int a = 0; // pitch / controller value / nothing
    int b = 0; // velocity / cc value
    std::int64_t tempo_us = 0;
    size_t order = 0; // stable merge order
};

class Reader {
  public:
    Reader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

    size_t pos() const { return pos_; }
    bool eof() const { return pos_ >= b_.size(); }

    std::uint8_t u8() {
        if (pos_ >= b_.size()) throw ParseError("midi: unexpected end of data", pos_);
        return b_[pos_++];
    }
    std::uint32_t u16() { std::uint32_t v = u8(); return (v << 8) | u8(); }
    std::uint32_t u32() { std::uint32_t v = u16(); return (v << 16) | u16(); }

    std::uint32_t varlen() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            std::uint8_t c = u8();
            v = (v << 7) | (c & 0x7f);
            if (!(c & 0x80)) return v;
        }
        throw ParseError("midi: variable-length quantity too long", pos_);
    }

    void skip(size_t n) {
        if (pos_ + n > b_.size()) throw ParseError("midi: chunk overruns file", pos_);
        pos_ += n;
    }

    bool match4(const char* tag) {
        if (pos_ + 4 > b_.size()) return false;
        for (int i = 0; i < 4; ++i)
            if (b_[pos_ + i] != std::uint8_t(tag[i])) return false;
        pos_ += 4;
        return true;
    }

  private:
    const std::vector<std::uint8_t>& b_;
    size_t pos_ = 0;
};

void parse_track(Reader& r, size_t end, std::vector<Event>& events, size_t& order,
                 std::vector<std::string>& warnings) {
    std::int64_t tick = 0;
    int running = -1;
    while (r.pos() < end) {
        tick += r.varlen();
        std::uint8_t first = r.u8();
        int status;
        int data0 = -1;
        if (first < 0x80) {
            if (running < 0) throw ParseError("midi: data byte without running status", r.pos());
            status = running;
            data0 = first;
        } else {
            status = first;
            if (status < 0xf0) running = status;
        }

        int type = status >> 4;
        int channel = status & 0x0f;
        auto next_data = [&]() {
            if (data0 >= 0) { int d = data0; data0 = -1; return d; }
            return int(r.u8());
        };

        switch (type) {
            case 0x8: { // note off
                int p = next_data(), v = int(r.u8());
                (void)v;
                events.push_back({tick, 0, channel, p, 0, 0, order++});
                break;
            }
            case 0x9: { // note on (velocity 0 = off)
                int p = next_data(), v = int(r.u8());
                events.push_back({tick, v > 0 ? 1 : 0, channel, p, v, 0, order++});
                break;
            }
            case 0xa: case 0xe: next_data(); r.u8(); break; // aftertouch / pitch bend
            case 0xb: { // controller
                int cc = next_data(), val = int(r.u8());
                if (cc == 64) events.push_back({tick, 2, channel, 0, val, 0, order++});
                break;
            }
            case 0xc: case 0xd: next_data(); break; // program change / channel pressure
            case 0xf: {
                running = -1; // system messages cancel running status
                if (status == 0xff) { // meta
                    int meta = int(r.u8());
                    std::uint32_t len = r.varlen();
                    if (meta == 0x51 && len == 3) {
                        std::int64_t us = (std::int64_t(r.u8()) << 16);
                        us |= (std::int64_t(r.u8()) << 8);
                        us |= std::int64_t(r.u8());
                        events.push_back({tick, 3, 0, 0, 0, us, order++});
                    } else if (meta == 0x2f) {
                        r.skip(len);
                        if (r.pos() != end)
                            warnings.push_back("midi: data after end-of-track meta event");
                        return;
                    } else {
                        r.skip(len);
                    }
                } else if (status == 0xf0 || status == 0xf7) { // sysex
                    r.skip(r.varlen());
                } else {
                    throw ParseError("midi: unsupported system message", r.pos());
                }
                break;
            }
            default:
                throw ParseError("midi: bad status byte", r.pos());
        }
    }
}

} // namespace

MidiParseResult parse_midi(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (!r.match4("MThd")) throw ParseError("midi: missing MThd header", 0);
    std::uint32_t hlen = r.u32();
    if (hlen < 6) throw ParseError("midi: short header chunk", r.pos());
    std::uint32_t format = r.u16();
    std::uint32_t ntrks = r.u16();
    std::uint32_t division = r.u16();
    r.skip(hlen - 6);
    if (format > 1) throw ParseError("midi: only formats 0 and 1 are supported", r.pos());
    if (division & 0x8000) throw ParseError("midi: SMPTE division not supported", r.pos());
    if (division == 0) throw ParseError("midi: zero ticks per quarter", r.pos());

    MidiParseResult out;
    std::vector<Event> events;
    size_t order = 0;
    for (std::uint32_t t = 0; t < ntrks; ++t) {
        if (!r.match4("MTrk")) throw ParseError("midi: missing MTrk chunk", r.pos());
        std::uint32_t len = r.u32();
        size_t end = r.pos() + len;
        if (end > bytes.size()) throw ParseError("midi: track chunk overruns file", r.pos());
        parse_track(r, end, events, order, out.warnings);
        if (r.pos() < end) r.skip(end - r.pos());
    }

    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        return a.order < b.order;
    });

    // Tick -> seconds with the tempo map (default 120 BPM = 500000 us/quarter).
    std::vector<double> secs(events.size());
    {
        double cur_sec = 0.0;
        std::int64_t cur_tick = 0;
        double us_per_tick = 500000.0 / division;
        for (size_t i = 0; i < events.size(); ++i) {
            cur_sec += double(events[i].tick - cur_tick) * us_per_tick * 1e-6;
            cur_tick = events[i].tick;
            secs[i] = cur_sec;
            if (events[i].type == 3) us_per_tick = double(events[i].tempo_us) / division;
        }
    }

    struct Open { size_t idx; double onset; int velocity; };
    std::map<std::pair<int, int>, std::vector<Open>> open; // (channel, pitch) -> FIFO
    struct Raw { double onset, off; int pitch, velocity, channel; };
    std::vector<Raw> raw;
    std::vector<std::pair<double, int>> pedal_events[16]; // (time, value) per channel

    for (size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (e.type == 1) {
            open[{e.channel, e.a}].push_back({raw.size(), secs[i], e.b});
            raw.push_back({secs[i], -1.0, e.a, e.b, e.channel});
        } else if (e.type == 0) {
            auto it = open.find({e.channel, e.a});
            if (it == open.end() || it->second.empty()) {
                out.warnings.push_back("midi: note-off without matching note-on (pitch " +
                                       std::to_string(e.a) + ")");
                continue;
            }
            raw[it->second.front().idx].off = secs[i];
            it->second.erase(it->second.begin());
        } else if (e.type == 2) {
            pedal_events[e.channel].push_back({secs[i], e.b});
        }
    }

    double track_end = events.empty() ? 0.0 : secs.back();
    for (auto& [key, opens] : open) {
        for (const Open& o : opens) {
            out.warnings.push_back("midi: note-on without matching note-off (pitch " +
                                   std::to_string(key.second) + "), closed at track end");
            raw[o.idx].off = track_end;
        }
    }

    if (raw.empty()) throw ParseError("midi: no notes found", bytes.size());
    out.note_count = raw.size();

    // Pedal extension: while CC64 >= 64 at note-off time, the note keeps
    // sounding until pedal release or the next same-pitch onset.
    auto pedal_release_after = [&](int channel, double t) {
        bool down = false;
        for (const auto& [pt, pv] : pedal_events[channel]) {
            if (pt > t) break;
            down = pv >= 64;
        }
        if (!down) return t;
        for (const auto& [pt, pv] : pedal_events[channel])
            if (pt > t && pv < 64) return pt;
        return std::max(t, track_end);
    };

    // Next same-pitch onset bound.
    std::map<int, std::vector<double>> onsets_by_pitch;
    for (const Raw& n : raw) onsets_by_pitch[n.pitch].push_back(n.onset);
    for (auto& [p, v] : onsets_by_pitch) std::sort(v.begin(), v.end());

    std::vector<PerformanceNote> notes;
    notes.reserve(raw.size());
    for (const Raw& n : raw) {
        double off = n.off;
        double ext = pedal_release_after(n.channel, off);
        if (ext > off) {
            const auto& same = onsets_by_pitch[n.pitch];
            auto it = std::upper_bound(same.begin(), same.end(), n.onset);
            if (it != same.end()) ext = std::min(ext, *it);
            off = std::max(off, ext);
        }
        PerformanceNote pn;
        pn.onset = n.onset;
        pn.pitch = std::clamp(n.pitch, 0, 127);
        pn.duration = std::clamp(off - n.onset, 0.0, 8.0);
        pn.velocity = std::clamp(n.velocity, 0, 127);
        notes.push_back(pn);
    }

    double t0 = notes.front().onset;
    for (auto& n : notes) {
        if (n.onset < t0) t0 = n.onset;
    }
    for (auto& n : notes) n.onset -= t0;

    NoteSequence seq = NoteSequence::make_performance(std::move(notes));
    seq = canonicalize(seq);
    for (auto& n : seq.perf) n.ioi = std::clamp(n.ioi, 0.0, 8.0);
    out.seq = std::move(seq);
    return out;
}

MidiParseResult parse_midi_file(const std::string& path) {
    return parse_midi(read_binary_file(path));
}

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(v >> 24); b.push_back((v >> 16) & 0xff);
    b.push_back((v >> 8) & 0xff); b.push_back(v & 0xff);
}
void put_u16(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back((v >> 8) & 0xff); b.push_back(v & 0xff);
}
void put_varlen(std::vector<std::uint8_t>& b, std::uint32_t v) {
    std::uint8_t chunk[4];
    int n = 0;
    do { chunk[n++] = v & 0x7f; v >>= 7; } while (v && n < 4);
    for (int i = n - 1; i > 0; --i) b.push_back(chunk[i] | 0x80);
    b.push_back(chunk[0]);
}

} // namespace

std::vector<std::uint8_t> write_midi(const NoteSequence& perf, double bpm, int ppq) {
    if (perf.kind != SeqKind::performance) throw DomainError("write_midi: not a performance");
    struct Ev { std::int64_t tick; int kind; int pitch; int vel; }; // kind 0=off 1=on
    std::vector<Ev> evs;
    double ticks_per_sec = ppq * bpm / 60.0;
    for (const PerformanceNote& n : perf.perf) {
        auto on = std::int64_t(std::llround(n.onset * ticks_per_sec));
        auto off = std::int64_t(std::llround((n.onset + n.duration) * ticks_per_sec));
        if (off <= on) off = on + 1;
        evs.push_back({on, 1, n.pitch, n.velocity});
        evs.push_back({off, 0, n.pitch, 0});
    }
    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        if (a.kind != b.kind) return a.kind < b.kind; // offs before ons at equal tick
        return a.pitch < b.pitch;
    });

    std::vector<std::uint8_t> track;
    // Tempo meta event at tick 0.
    auto tempo_us = std::uint32_t(std::llround(60000000.0 / bpm));
    put_varlen(track, 0);
    track.push_back(0xff); track.push_back(0x51); track.push_back(0x03);
    track.push_back((tempo_us >> 16) & 0xff);
    track.push_back((tempo_us >> 8) & 0xff);
    track.push_back(tempo_us & 0xff);

    std::int64_t cur = 0;
    for (const Ev& e : evs) {
        put_varlen(track, std::uint32_t(e.tick - cur));
        cur = e.tick;
        track.push_back(e.kind == 1 ? 0x90 : 0x80);
        track.push_back(std::uint8_t(e.pitch));
        track.push_back(std::uint8_t(e.kind == 1 ? std::max(1, e.vel) : 0));
    }
    put_varlen(track, 0);
    track.push_back(0xff); track.push_back(0x2f); track.push_back(0x00);

    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'M', 'T', 'h', 'd'});
    put_u32(out, 6);
    put_u16(out, 0);
    put_u16(out, 1);
    put_u16(out, std::uint32_t(ppq));
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    put_u32(out, std::uint32_t(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

void write_midi_file(const std::string& path, const NoteSequence& perf, double bpm, int ppq) {
    write_binary_file(path, write_midi(perf, bpm, ppq));
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is),
                                     std::istreambuf_iterator<char>());
}

void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

} // namespace scoreperf
