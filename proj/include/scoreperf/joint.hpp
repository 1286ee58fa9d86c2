#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scoreperf/checkpoint.hpp"
#include "scoreperf/nn.hpp"
#include "scoreperf/optimizer.hpp"
#include "scoreperf/tokenize.hpp"

namespace scoreperf {

struct JointConfig {
    TransformerConfig tf{2, 8, 128, 256}; // CI profile; paper preset below
    double lambda_rec = 0.2;
    double lambda_kl = 0.1;
    double encoder_mask_rate = 0.5;
    double decoder_mask_rate = 0.15; // light dropout on teacher-forced inputs
    bool sample_style = true;        // z_s sampled (vs posterior mean) in training
    int max_notes = 256;

    static JointConfig paper_profile(); // 6 layers, 8 heads, D=512, ffn 3072
};

// Token forms of one score (encoder input + decoder target).
struct ScoreItem {
    TokenSequence in;  // score_input layout
    TokenSequence out; // score_output layout
};

// Token forms of one performance.
struct PerfItem {
    TokenSequence in;  // perf_input layout
    TokenSequence out; // perf_output layout
};

ScoreItem make_score_item(const NoteSequence& score);
PerfItem make_perf_item(const NoteSequence& perf);

struct JointDataset {
    std::vector<std::pair<ScoreItem, PerfItem>> paired;
    std::vector<ScoreItem> scores_unpaired;
    std::vector<PerfItem> perfs_unpaired;
};

struct LossBreakdown {
    double total = 0, epr = 0, apt = 0, rec_x = 0, rec_y = 0, kl = 0;
};

struct TrainOptions {
    long long steps = 200;
    long long warmup = 40;
    double peak_lr = 5e-5;
    int batch_per_subtask = 2;
    double unpaired_ratio = 0.5; // fraction of the unpaired pools mixed in
    std::uint64_t seed = 1;
    std::string loss_csv;        // append per-step breakdown when non-empty
    double stop_when_below = 0;  // early stop once epr and apt are both below
};

struct DecodeOptions {
    enum class Mode { greedy, top_k };
    Mode mode = Mode::greedy;
    int k = 5;
    std::uint64_t seed = 1;
    int max_tokens_per_note = 8;
    int token_cap = 4096;
};

struct RepairReport {
    int emitted = 0;
    int repaired = 0;
};

class JointModel {
public:
    explicit JointModel(JointConfig cfg = {}, std::uint64_t init_seed = 0x5eedf00dULL);

    const JointConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Graph builders (shared by training and inference).
    NodeId score_content(Bind& bind, const TokenSequence& score_in) const;    // f_cX
    NodeId perf_content(Bind& bind, const TokenSequence& perf_in) const;      // f_cY
    StylePosterior style_posterior(Bind& bind, const TokenSequence& perf_in) const; // f_sY
    NodeId perf_logits(Bind& bind, NodeId memory, const std::vector<int>& decoder_ids) const;
    std::vector<NodeId> score_logits(Bind& bind, NodeId memory,
                                     const std::vector<std::vector<int>>& decoder_streams) const;

    // Single-sample losses (each returns a scalar node; posteriors are
    // appended so the caller can apply the once-per-batch KL).
    NodeId loss_epr(Bind& bind, const ScoreItem& x, const PerfItem& y, Rng& rng,
                    std::vector<StylePosterior>* posteriors) const;
    NodeId loss_apt(Bind& bind, const PerfItem& y, const ScoreItem& x, Rng& rng) const;
    NodeId loss_rec_score(Bind& bind, const ScoreItem& x, Rng& rng) const;
    NodeId loss_rec_perf(Bind& bind, const PerfItem& y, Rng& rng,
                         std::vector<StylePosterior>* posteriors) const;

    struct BatchRef {
        std::vector<std::pair<const ScoreItem*, const PerfItem*>> epr;
        std::vector<std::pair<const PerfItem*, const ScoreItem*>> apt;
        std::vector<const ScoreItem*> rec_score;
        std::vector<const PerfItem*> rec_perf;
    };

    struct TotalLossNodes {
        NodeId total = -1, epr = -1, apt = -1, rec_x = -1, rec_y = -1, kl = -1;
        LossBreakdown values(const Tape& tape) const;
    };

    // L = L_EPR + L_APT + lambda_rec (L_rec,X + L_rec,Y) + lambda_KL * L_KL,
    // KL taken once over all style posteriors of the batch.
    TotalLossNodes total_loss(Bind& bind, const BatchRef& batch, Rng& rng) const;

    LossBreakdown train(const JointDataset& data, const TrainOptions& opt);

    NoteSequence render(const TokenSequence& score_in, const Tensor& style,
                        const DecodeOptions& opt = {}, RepairReport* report = nullptr);
    NoteSequence transcribe(const TokenSequence& perf_in, const DecodeOptions& opt = {});

    // Mean of per-chunk posterior means over max_notes-sized chunks; [1, D].
    Tensor extract_style(const TokenSequence& perf_in);

    void save(const std::string& path) const;
    static JointModel load(const std::string& path);

private:
    JointConfig cfg_;
    ParamStore params_;
};

} // namespace scoreperf
