#include "scoreperf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "scoreperf/errors.hpp"
#include "scoreperf/notes_io.hpp"

namespace scoreperf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kScoreGrid = 0.25;   // one 16th note, in quarter lengths
constexpr double kPerfGrid = 0.125;   // one 16th note in seconds at 120 BPM
constexpr double kPerfWindow = 0.25;  // onset pairing window, seconds
constexpr double kGridEps = 1e-12;    // exact-boundary deviations do not count

std::vector<double> score_onsets(const NoteSequence& s) {
    std::vector<double> out;
    out.reserve(s.score.size());
    for (const ScoreNote& n : s.score) out.push_back(n.onset.to_double());
    return out;
}

std::vector<int> score_pitches(const NoteSequence& s) {
    std::vector<int> out;
    out.reserve(s.score.size());
    for (const ScoreNote& n : s.score) out.push_back(n.pitch);
    return out;
}

std::vector<double> perf_onsets(const NoteSequence& s) {
    std::vector<double> out;
    out.reserve(s.perf.size());
    for (const PerformanceNote& n : s.perf) out.push_back(n.onset);
    return out;
}

std::vector<int> perf_pitches(const NoteSequence& s) {
    std::vector<int> out;
    out.reserve(s.perf.size());
    for (const PerformanceNote& n : s.perf) out.push_back(n.pitch);
    return out;
}

double pct(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : 100.0 * double(num) / double(den);
}

double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw DegenerateStatistics("variance needs at least 2 values");
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return ss / double(xs.size() - 1);
}

// KL(hyp || ref) between 32-bin histograms over the observed ref range, with
// add-one smoothing; hyp values outside the range fall into the edge bins.
double histogram_kl(const std::vector<double>& ref, const std::vector<double>& hyp) {
    constexpr int kBins = 32;
    double lo = *std::min_element(ref.begin(), ref.end());
    double hi = *std::max_element(ref.begin(), ref.end());
    auto bin_of = [&](double v) {
        if (hi <= lo) return 0;
        int b = int(std::floor((v - lo) / (hi - lo) * kBins));
        return std::clamp(b, 0, kBins - 1);
    };
    std::vector<double> p(kBins, 1.0), q(kBins, 1.0); // add-one smoothing
    for (double v : hyp) p[bin_of(v)] += 1.0;
    for (double v : ref) q[bin_of(v)] += 1.0;
    double psum = double(kBins) + double(hyp.size());
    double qsum = double(kBins) + double(ref.size());
    double kl = 0;
    for (int b = 0; b < kBins; ++b) kl += p[b] / psum * std::log(p[b] / psum * qsum / q[b]);
    return kl;
}

} // namespace

NoteAlignment align_events(const std::vector<double>& ref_onsets,
                           const std::vector<int>& ref_pitches,
                           const std::vector<double>& hyp_onsets,
                           const std::vector<int>& hyp_pitches, const AlignmentOptions& opt) {
    if (ref_onsets.size() != ref_pitches.size() || hyp_onsets.size() != hyp_pitches.size())
        throw ShapeError("align_events: onset/pitch lengths differ");
    std::size_t n = ref_onsets.size(), m = hyp_onsets.size();
    std::vector<double> dp((n + 1) * (m + 1), 0.0);
    std::vector<unsigned char> move((n + 1) * (m + 1), 0); // 1 pair, 2 skip ref, 3 skip hyp
    auto idx = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };

    for (std::size_t i = 1; i <= n; ++i) {
        dp[idx(i, 0)] = double(i) * opt.gap_cost;
        move[idx(i, 0)] = 2;
    }
    for (std::size_t j = 1; j <= m; ++j) {
        dp[idx(0, j)] = double(j) * opt.gap_cost;
        move[idx(0, j)] = 3;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            double d = std::abs(ref_onsets[i - 1] - hyp_onsets[j - 1]);
            bool pairable = d <= opt.onset_window &&
                            (!opt.require_pitch || ref_pitches[i - 1] == hyp_pitches[j - 1]);
            double best = pairable ? dp[idx(i - 1, j - 1)] + d : kInf;
            unsigned char mv = 1;
            if (dp[idx(i - 1, j)] + opt.gap_cost < best) {
                best = dp[idx(i - 1, j)] + opt.gap_cost;
                mv = 2;
            }
            if (dp[idx(i, j - 1)] + opt.gap_cost < best) {
                best = dp[idx(i, j - 1)] + opt.gap_cost;
                mv = 3;
            }
            dp[idx(i, j)] = best;
            move[idx(i, j)] = mv;
        }
    }

    NoteAlignment out;
    out.total_cost = dp[idx(n, m)];
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        switch (move[idx(i, j)]) {
        case 1:
            out.pairs.emplace_back(i - 1, j - 1);
            --i;
            --j;
            break;
        case 2:
            out.unmatched_ref.push_back(i - 1);
            --i;
            break;
        default:
            out.unmatched_hyp.push_back(j - 1);
            --j;
            break;
        }
    }
    std::reverse(out.pairs.begin(), out.pairs.end());
    std::reverse(out.unmatched_ref.begin(), out.unmatched_ref.end());
    std::reverse(out.unmatched_hyp.begin(), out.unmatched_hyp.end());
    return out;
}

NoteAlignment align_notes(const NoteSequence& ref, const NoteSequence& hyp) {
    if (ref.kind != hyp.kind) throw DomainError("align_notes: mixed sequence kinds");
    AlignmentOptions opt;
    if (ref.kind == SeqKind::score) {
        opt.gap_cost = 1.0;
        return align_events(score_onsets(ref), score_pitches(ref), score_onsets(hyp),
                            score_pitches(hyp), opt);
    }
    opt.gap_cost = 0.25;
    opt.onset_window = kPerfWindow;
    return align_events(perf_onsets(ref), perf_pitches(ref), perf_onsets(hyp),
                        perf_pitches(hyp), opt);
}

MusterReport muster(const NoteSequence& ref, const NoteSequence& hyp) {
    if (ref.kind != SeqKind::score || hyp.kind != SeqKind::score)
        throw DomainError("muster compares symbolic scores");
    if (ref.empty()) throw EmptyReference("muster: empty reference");

    NoteAlignment a = align_notes(ref, hyp);
    MusterReport r;
    r.e_miss = pct(a.unmatched_ref.size(), ref.size());
    r.e_extra = pct(a.unmatched_hyp.size(), ref.size());

    std::size_t off_onset = 0, off_offset = 0;
    for (auto [i, j] : a.pairs) {
        const ScoreNote& rn = ref.score[i];
        const ScoreNote& hn = hyp.score[j];
        double d_on = std::abs(rn.onset.to_double() - hn.onset.to_double());
        double d_off = std::abs((rn.onset + rn.note_value).to_double() -
                                (hn.onset + hn.note_value).to_double());
        if (d_on > kScoreGrid + kGridEps) ++off_onset;
        if (d_off > kScoreGrid + kGridEps) ++off_offset;
    }
    r.e_onset = pct(off_onset, a.pairs.size());
    r.e_offset = pct(off_offset, a.pairs.size());

    AlignmentOptions onset_only;
    onset_only.require_pitch = false;
    NoteAlignment ap = align_events(score_onsets(ref), score_pitches(ref), score_onsets(hyp),
                                    score_pitches(hyp), onset_only);
    std::size_t subs = 0;
    for (auto [i, j] : ap.pairs)
        if (ref.score[i].pitch != hyp.score[j].pitch) ++subs;
    r.e_p = pct(subs, ref.size());

    r.e_avg = (r.e_p + r.e_miss + r.e_extra + r.e_onset + r.e_offset) / 5.0;
    return r;
}

ScoreSimilarityReport score_similarity(const NoteSequence& ref, const NoteSequence& hyp) {
    if (ref.kind != SeqKind::score || hyp.kind != SeqKind::score)
        throw DomainError("score_similarity compares symbolic scores");
    if (ref.empty()) throw EmptyReference("score_similarity: empty reference");

    NoteAlignment a = align_notes(ref, hyp);
    ScoreSimilarityReport r;
    r.e_miss = pct(a.unmatched_ref.size(), ref.size());
    r.e_extra = pct(a.unmatched_hyp.size(), ref.size());

    std::size_t dur = 0, staff = 0, stem = 0, spell = 0;
    for (auto [i, j] : a.pairs) {
        const ScoreNote& rn = ref.score[i];
        const ScoreNote& hn = hyp.score[j];
        if (rn.note_value != hn.note_value) ++dur;
        if (rn.hand != hn.hand) ++staff;
        if (rn.stem != hn.stem) ++stem;
        if (rn.accidental != hn.accidental) ++spell;
    }
    r.e_dur = pct(dur, a.pairs.size());
    r.e_staff = pct(staff, a.pairs.size());
    r.e_stem = pct(stem, a.pairs.size());
    r.e_spell = pct(spell, a.pairs.size());
    return r;
}

AlignStats epr_accuracy(const NoteSequence& ref, const NoteSequence& hyp) {
    if (ref.kind != SeqKind::performance || hyp.kind != SeqKind::performance)
        throw DomainError("epr_accuracy compares performances");
    if (ref.empty() || hyp.empty()) throw EmptyReference("epr_accuracy: empty input");

    NoteAlignment a = align_notes(ref, hyp);
    AlignStats s;
    s.align = pct(a.pairs.size(), ref.size());
    s.miss = pct(a.unmatched_ref.size(), ref.size());
    s.insert_ = pct(a.unmatched_hyp.size(), hyp.size());
    return s;
}

DistStats dist_stats(const NoteSequence& ref, const NoteSequence& hyp) {
    if (ref.kind != SeqKind::performance || hyp.kind != SeqKind::performance)
        throw DomainError("dist_stats compares performances");
    if (ref.size() < 2 || hyp.size() < 2)
        throw DegenerateStatistics("dist_stats needs at least 2 notes per side");

    std::vector<double> dev, hyp_dur, hyp_vel, ref_dur, ref_vel;
    for (const PerformanceNote& n : hyp.perf) {
        dev.push_back(n.onset - std::round(n.onset / kPerfGrid) * kPerfGrid);
        hyp_dur.push_back(n.duration);
        hyp_vel.push_back(double(n.velocity));
    }
    for (const PerformanceNote& n : ref.perf) {
        ref_dur.push_back(n.duration);
        ref_vel.push_back(double(n.velocity));
    }

    DistStats d;
    d.var_onset = sample_variance(dev);
    d.var_duration = sample_variance(hyp_dur);
    d.var_velocity = sample_variance(hyp_vel);
    d.kl_duration = histogram_kl(ref_dur, hyp_dur);
    d.kl_velocity = histogram_kl(ref_vel, hyp_vel);

    NoteAlignment a = align_notes(ref, hyp);
    double mae_d = 0, mae_v = 0;
    for (auto [i, j] : a.pairs) {
        mae_d += std::abs(ref.perf[i].duration - hyp.perf[j].duration);
        mae_v += std::abs(double(ref.perf[i].velocity) - double(hyp.perf[j].velocity));
    }
    if (!a.pairs.empty()) {
        d.mae_duration = mae_d / double(a.pairs.size());
        d.mae_velocity = mae_v / double(a.pairs.size());
    }
    return d;
}

NoteSequence nominal_performance(const NoteSequence& score) {
    if (score.kind != SeqKind::score) throw DomainError("nominal_performance takes a score");
    if (score.empty()) throw EmptySequence("nominal_performance: empty score");
    constexpr double spb = 0.5; // seconds per beat at 120 BPM
    std::vector<PerformanceNote> notes;
    notes.reserve(score.score.size());
    for (const ScoreNote& n : score.score) {
        PerformanceNote p;
        p.onset = n.onset.to_double() * spb;
        p.pitch = n.pitch;
        p.duration = std::clamp(n.note_value.to_double() * spb, 0.0, 8.0);
        p.velocity = 64;
        notes.push_back(p);
    }
    for (std::size_t i = 1; i < notes.size(); ++i)
        notes[i].ioi = std::clamp(notes[i].onset - notes[i - 1].onset, 0.0, 8.0);
    return NoteSequence::make_performance(std::move(notes));
}

DiversityReport diversity_mae(const NoteSequence& score,
                              const std::vector<NoteSequence>& renditions) {
    if (renditions.size() < 2)
        throw DegenerateStatistics("diversity_mae needs at least 2 renditions");
    NoteSequence nominal = nominal_performance(score);

    // score-note index -> rendition-note index (-1 when unmatched)
    AlignmentOptions opt;
    opt.gap_cost = 0.25; // seconds domain, but no hard window: renditions may
    opt.require_pitch = true; // be expressively far from nominal timing
    std::vector<std::vector<long long>> at(renditions.size());
    for (std::size_t r = 0; r < renditions.size(); ++r) {
        if (renditions[r].kind != SeqKind::performance)
            throw DomainError("diversity_mae: rendition is not a performance");
        at[r].assign(score.size(), -1);
        NoteAlignment a = align_events(perf_onsets(nominal), perf_pitches(nominal),
                                       perf_onsets(renditions[r]), perf_pitches(renditions[r]),
                                       opt);
        for (auto [i, j] : a.pairs) at[r][i] = (long long)(j);
    }

    std::size_t R = renditions.size();
    DiversityReport rep;
    rep.mae_duration = Tensor(R, R);
    rep.mae_velocity = Tensor(R, R);
    double sum_d = 0, sum_v = 0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < R; ++a) {
        for (std::size_t b = a + 1; b < R; ++b) {
            double mae_d = 0, mae_v = 0;
            std::size_t common = 0;
            for (std::size_t i = 0; i < score.size(); ++i) {
                if (at[a][i] < 0 || at[b][i] < 0) continue;
                const PerformanceNote& na = renditions[a].perf[std::size_t(at[a][i])];
                const PerformanceNote& nb = renditions[b].perf[std::size_t(at[b][i])];
                mae_d += std::abs(na.duration - nb.duration);
                mae_v += std::abs(double(na.velocity) - double(nb.velocity));
                ++common;
            }
            if (common > 0) {
                mae_d /= double(common);
                mae_v /= double(common);
            }
            rep.mae_duration.at(a, b) = rep.mae_duration.at(b, a) = mae_d;
            rep.mae_velocity.at(a, b) = rep.mae_velocity.at(b, a) = mae_v;
            sum_d += mae_d;
            sum_v += mae_v;
            ++pairs;
        }
    }
    rep.avg_duration = sum_d / double(pairs);
    rep.avg_velocity = sum_v / double(pairs);
    return rep;
}

std::string to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    if (r.has_muster) {
        j["muster"] = {{"e_p", r.muster.e_p},         {"e_miss", r.muster.e_miss},
                       {"e_extra", r.muster.e_extra}, {"e_onset", r.muster.e_onset},
                       {"e_offset", r.muster.e_offset}, {"e_avg", r.muster.e_avg}};
    }
    if (r.has_score_sim) {
        j["score_similarity"] = {{"e_miss", r.score_sim.e_miss},
                                 {"e_extra", r.score_sim.e_extra},
                                 {"e_dur", r.score_sim.e_dur},
                                 {"e_staff", r.score_sim.e_staff},
                                 {"e_stem", r.score_sim.e_stem},
                                 {"e_spell", r.score_sim.e_spell}};
    }
    if (r.has_align) {
        j["align_stats"] = {{"align", r.align_stats.align},
                            {"insert", r.align_stats.insert_},
                            {"miss", r.align_stats.miss}};
    }
    if (r.has_dist) {
        j["dist_stats"] = {{"var_onset", r.dist.var_onset},
                           {"var_duration", r.dist.var_duration},
                           {"var_velocity", r.dist.var_velocity},
                           {"kl_duration", r.dist.kl_duration},
                           {"kl_velocity", r.dist.kl_velocity},
                           {"mae_duration", r.dist.mae_duration},
                           {"mae_velocity", r.dist.mae_velocity}};
    }
    return j.dump(2) + "\n";
}

std::string csv_header() {
    return "e_p,e_miss,e_extra,e_onset,e_offset,e_avg,"
           "ss_e_miss,ss_e_extra,e_dur,e_staff,e_stem,e_spell,"
           "align,insert,miss,"
           "var_onset,var_duration,var_velocity,kl_duration,kl_velocity,"
           "mae_duration,mae_velocity";
}

std::string to_csv_row(const MetricReport& r) {
    std::ostringstream os;
    auto emit = [&](bool has, std::initializer_list<double> vs, bool first = false) {
        bool lead = first;
        for (double v : vs) {
            if (!lead) os << ',';
            lead = false;
            if (has) os << format_double(v);
        }
    };
    emit(r.has_muster,
         {r.muster.e_p, r.muster.e_miss, r.muster.e_extra, r.muster.e_onset, r.muster.e_offset,
          r.muster.e_avg},
         true);
    emit(r.has_score_sim, {r.score_sim.e_miss, r.score_sim.e_extra, r.score_sim.e_dur,
                           r.score_sim.e_staff, r.score_sim.e_stem, r.score_sim.e_spell});
    emit(r.has_align, {r.align_stats.align, r.align_stats.insert_, r.align_stats.miss});
    emit(r.has_dist, {r.dist.var_onset, r.dist.var_duration, r.dist.var_velocity,
                      r.dist.kl_duration, r.dist.kl_velocity, r.dist.mae_duration,
                      r.dist.mae_velocity});
    return os.str();
}

} // namespace scoreperf
