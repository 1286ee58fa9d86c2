#include "scoreperf/filter.hpp"

#include <algorithm>

#include <json.hpp>

#include "scoreperf/errors.hpp"
#include "scoreperf/key.hpp"

namespace scoreperf {

FilterReport filter_score(const NoteSequence& seq, const ScoreMetadata& meta) {
    if (seq.kind != SeqKind::score) throw DomainError("filter_score: expects a score sequence");
    FilterReport report;
    auto fail = [&](const char* rule) { report.failed_rules.emplace_back(rule); };

    if (meta.staves != 2) fail("staff_structure");
    if (seq.score.size() < 100) fail("note_count");
    if (meta.bar_count < 10) fail("bar_count");
    if (meta.max_notes_per_bar > 64) fail("note_density");

    bool timesig_ok = !meta.time_signatures.empty();
    for (const TimeSignature& ts : meta.time_signatures) {
        bool beats_ok = ts.beats >= 1 && ts.beats <= 16;
        bool type_ok = ts.beat_type == 2 || ts.beat_type == 4 || ts.beat_type == 8 ||
                       ts.beat_type == 16 || ts.beat_type == 32;
        timesig_ok = timesig_ok && beats_ok && type_ok;
    }
    if (!timesig_ok) fail("time_signature");

    bool key_ok = true;
    double sum = 0;
    std::size_t measured = 0;
    for (const KeySegment& seg : meta.key_segments) {
        if (seg.fifths < -7 || seg.fifths > 7) {
            key_ok = false;
            continue;
        }
        if (seg.start_note >= seg.end_note || seg.end_note > seq.score.size()) continue;
        int est = estimate_key(seq, seg.start_note, seg.end_note);
        int d = key_distance(seg.fifths, est);
        report.per_segment_distances.push_back(d);
        sum += d;
        ++measured;
    }
    report.key_distance = measured > 0 ? sum / double(measured) : 0.0;
    if (!key_ok || report.key_distance > 1.0) fail("key_signature");

    report.accepted = report.failed_rules.empty();
    return report;
}

std::string to_json(const FilterReport& report) {
    nlohmann::ordered_json j;
    j["accepted"] = report.accepted;
    j["failed_rules"] = report.failed_rules;
    j["key_distance"] = report.key_distance;
    j["per_segment_distances"] = report.per_segment_distances;
    return j.dump(2) + "\n";
}

} // namespace scoreperf
