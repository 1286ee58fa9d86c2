#include "scoreperf/vocab.hpp"

#include <cmath>

#include <json.hpp>

#include "scoreperf/errors.hpp"

namespace scoreperf {

int quantize(double value, const Vocabulary& vocab) {
    if (vocab.kind != Vocabulary::Kind::uniform_bins)
        throw DomainError("quantize: vocabulary '" + vocab.name + "' has no uniform binning");
    if (!std::isfinite(value))
        throw DomainError("quantize: non-finite value for '" + vocab.name + "'");
    double width = vocab.bin_width();
    int id = int(std::floor((value - vocab.lo) / width));
    if (id < 0) id = 0;
    if (id > vocab.bins - 1) id = vocab.bins - 1;
    return id;
}

double bin_center(int id, const Vocabulary& vocab) {
    switch (vocab.kind) {
        case Vocabulary::Kind::uniform_bins:
            if (id < 0 || id >= vocab.bins)
                throw DecodeError("bin_center: id out of range for '" + vocab.name + "'");
            return vocab.lo + (id + 0.5) * vocab.bin_width();
        case Vocabulary::Kind::integer_range:
            if (id < 0 || id >= vocab.size)
                throw DecodeError("bin_center: id out of range for '" + vocab.name + "'");
            return double(vocab.int_lo + id);
        case Vocabulary::Kind::steps:
            if (id < 0 || id >= vocab.size)
                throw DecodeError("bin_center: id out of range for '" + vocab.name + "'");
            return (id + 1) * vocab.step;
        case Vocabulary::Kind::categorical:
            throw DomainError("bin_center: categorical vocabulary '" + vocab.name + "'");
    }
    throw DomainError("bin_center: bad vocabulary kind");
}

namespace {

Vocabulary uniform(std::string name, int bins, double lo, double hi, bool absent = false) {
    Vocabulary v;
    v.name = std::move(name);
    v.kind = Vocabulary::Kind::uniform_bins;
    v.bins = bins;
    v.lo = lo;
    v.hi = hi;
    v.has_absent = absent;
    v.size = bins + (absent ? 1 : 0);
    return v;
}

Vocabulary integer_range(std::string name, int size, long long int_lo) {
    Vocabulary v;
    v.name = std::move(name);
    v.kind = Vocabulary::Kind::integer_range;
    v.size = size;
    v.int_lo = int_lo;
    return v;
}

Vocabulary categorical(std::string name, std::vector<std::string> values) {
    Vocabulary v;
    v.name = std::move(name);
    v.kind = Vocabulary::Kind::categorical;
    v.values = std::move(values);
    v.size = int(v.values.size());
    return v;
}

Vocabulary steps(std::string name, int count, double step) {
    Vocabulary v;
    v.name = std::move(name);
    v.kind = Vocabulary::Kind::steps;
    v.size = count;
    v.step = step;
    return v;
}

TokenizerManifest build_default() {
    TokenizerManifest m;

    m.score_input = {
        uniform("onset_in_bar", 145, 0.0, 6.0),
        uniform("ioi", 145, 0.0, 6.0),
        integer_range("pitch", 128, 0),
        uniform("note_value", 145, 0.0, 6.0),
        uniform("measure_length", 145, 0.0, 6.0, /*absent=*/true), // size 146
        categorical("grace", {"false", "true"}),
        categorical("hand", {"false", "true"}),
    };

    m.perf_input = {
        integer_range("pitch", 128, 0),
        uniform("ioi", 200, 0.0, 8.0),
        uniform("duration", 200, 0.0, 8.0),
        uniform("velocity", 8, 0.0, 127.0),
    };

    m.score_output = {
        uniform("onset_in_bar", 145, 0.0, 6.0),
        integer_range("pitch", 128, 0),
        uniform("note_value", 145, 0.0, 6.0),
        uniform("measure_length", 145, 0.0, 6.0, /*absent=*/true),
        categorical("grace", {"false", "true"}),
        categorical("hand", {"false", "true"}),
        categorical("trill", {"false", "true"}),
        categorical("staccato", {"false", "true"}),
        integer_range("voice", 8, 1),
        categorical("stem", {"up", "down", "none"}),
        categorical("accidental",
                    {"double-flat", "flat", "natural", "sharp", "double-sharp", "none"}),
    };

    Vocabulary special = categorical("special", {"PAD", "BOS"});
    special.specials = {{"PAD", TokenizerManifest::kPad}, {"BOS", TokenizerManifest::kBos}};
    Vocabulary note_on = integer_range("note_on", 88, 21);
    Vocabulary velocity = uniform("velocity", 32, 0.0, 127.0);
    Vocabulary duration = steps("duration", m.duration_steps, m.duration_step_beats);
    Vocabulary time_shift = steps("time_shift", m.time_shift_count, 1.0 / m.beat_resolution);
    m.perf_output = {special, note_on, velocity, duration, time_shift};

    return m;
}

} // namespace

const TokenizerManifest& default_manifest() {
    static const TokenizerManifest m = build_default();
    return m;
}

std::string manifest_json(const TokenizerManifest& m) {
    using json = nlohmann::ordered_json;
    auto vocab_to_json = [](const Vocabulary& v) {
        json j;
        j["name"] = v.name;
        j["size"] = v.size;
        switch (v.kind) {
            case Vocabulary::Kind::uniform_bins:
                j["kind"] = "uniform_bins";
                j["bins"] = v.bins;
                j["lo"] = v.lo;
                j["hi"] = v.hi;
                if (v.has_absent) j["absent_id"] = v.absent_id();
                break;
            case Vocabulary::Kind::integer_range:
                j["kind"] = "integer_range";
                j["int_lo"] = v.int_lo;
                break;
            case Vocabulary::Kind::categorical:
                j["kind"] = "categorical";
                j["values"] = v.values;
                break;
            case Vocabulary::Kind::steps:
                j["kind"] = "steps";
                j["step"] = v.step;
                break;
        }
        if (!v.specials.empty()) {
            json sp = json::object();
            for (const auto& [name, id] : v.specials) sp[name] = id;
            j["specials"] = sp;
        }
        return j;
    };
    auto list = [&](const std::vector<Vocabulary>& vs) {
        json arr = json::array();
        for (const Vocabulary& v : vs) arr.push_back(vocab_to_json(v));
        return arr;
    };

    json j;
    j["format"] = "scoreperf-tokenizer v1";
    j["score_input"] = list(m.score_input);
    j["perf_input"] = list(m.perf_input);
    j["score_output"] = list(m.score_output);
    j["perf_output"] = list(m.perf_output);
    json grid;
    grid["reference_bpm"] = m.reference_bpm;
    grid["beat_resolution"] = m.beat_resolution;
    grid["time_shift_count"] = m.time_shift_count;
    grid["duration_steps"] = m.duration_steps;
    grid["duration_step_beats"] = m.duration_step_beats;
    grid["flat_ids"] = {{"PAD", TokenizerManifest::kPad},
                        {"BOS", TokenizerManifest::kBos},
                        {"note_on_base", TokenizerManifest::kNoteOnBase},
                        {"velocity_base", TokenizerManifest::kVelocityBase},
                        {"duration_base", TokenizerManifest::kDurationBase},
                        {"time_shift_base", TokenizerManifest::kTimeShiftBase},
                        {"vocab_size", TokenizerManifest::kPerfVocabSize}};
    j["perf_output_grid"] = grid;
    return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string manifest_hash(const TokenizerManifest& m) {
    std::uint64_t h = fnv1a64(manifest_json(m));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace scoreperf
