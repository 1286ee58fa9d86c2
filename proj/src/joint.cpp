#include "scoreperf/joint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "scoreperf/errors.hpp"
#include "scoreperf/notes_io.hpp"

namespace scoreperf {

namespace {

using TM = TokenizerManifest;

constexpr int kMaskExtra = 1; // encoder-input tables: one MASK row
constexpr int kDecExtra = 2;  // decoder-input tables: MASK row then BOS row

std::vector<int> shifted_flat_inputs(const std::vector<int>& events) {
    if (events.empty() || events.front() != TM::kBos)
        throw EncodeError("perf decoder: target stream must start with BOS");
    return std::vector<int>(events.begin(), events.end() - 1);
}

} // namespace

JointConfig JointConfig::paper_profile() {
    JointConfig cfg;
    cfg.tf = TransformerConfig{6, 8, 512, 3072};
    return cfg;
}

ScoreItem make_score_item(const NoteSequence& score) {
    return {encode_score_input(score), encode_score_output(score)};
}

PerfItem make_perf_item(const NoteSequence& perf) {
    return {encode_perf_input(perf), encode_perf_output(perf)};
}

JointModel::JointModel(JointConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg), params_(init_seed) {
    cfg_.tf.validate();
}

NodeId JointModel::score_content(Bind& bind, const TokenSequence& score_in) const {
    if (score_in.layout != TokenLayout::score_input)
        throw ShapeError("score_content: wrong token layout");
    const TokenizerManifest& m = default_manifest();
    NodeId x = embed_notes(bind, "fcx", score_in.streams, m.score_input, cfg_.tf.model_dim,
                           kMaskExtra);
    std::size_t n = bind.tape().val(x).rows;
    return encoder_forward(bind, "fcx.enc", x, full_mask(n, n), cfg_.tf);
}

NodeId JointModel::perf_content(Bind& bind, const TokenSequence& perf_in) const {
    if (perf_in.layout != TokenLayout::perf_input)
        throw ShapeError("perf_content: wrong token layout");
    const TokenizerManifest& m = default_manifest();
    NodeId y = embed_notes(bind, "fcy", perf_in.streams, m.perf_input, cfg_.tf.model_dim,
                           kMaskExtra);
    std::size_t n = bind.tape().val(y).rows;
    return encoder_forward(bind, "fcy.enc", y, full_mask(n, n), cfg_.tf);
}

StylePosterior JointModel::style_posterior(Bind& bind, const TokenSequence& perf_in) const {
    if (perf_in.layout != TokenLayout::perf_input)
        throw ShapeError("style_posterior: wrong token layout");
    const TokenizerManifest& m = default_manifest();
    NodeId y = embed_notes(bind, "fsy", perf_in.streams, m.perf_input, cfg_.tf.model_dim,
                           kMaskExtra);
    return style_encode(bind, "fsy.enc", y, cfg_.tf);
}

NodeId JointModel::perf_logits(Bind& bind, NodeId memory,
                               const std::vector<int>& decoder_ids) const {
    NodeId x = embed_flat(bind, "gy.embed", decoder_ids, TM::kPerfVocabSize + kMaskExtra,
                          cfg_.tf.model_dim);
    NodeId h = decoder_forward(bind, "gy.dec", x, memory, cfg_.tf);
    return output_head(bind, "gy.head", h, TM::kPerfVocabSize);
}

std::vector<NodeId> JointModel::score_logits(
    Bind& bind, NodeId memory, const std::vector<std::vector<int>>& decoder_streams) const {
    const TokenizerManifest& m = default_manifest();
    NodeId x = embed_notes(bind, "gx", decoder_streams, m.score_output, cfg_.tf.model_dim,
                           kDecExtra);
    NodeId h = decoder_forward(bind, "gx.dec", x, memory, cfg_.tf);
    std::vector<NodeId> heads;
    heads.reserve(m.score_output.size());
    for (const Vocabulary& v : m.score_output)
        heads.push_back(output_head(bind, "gx.head." + v.name, h, v.size));
    return heads;
}

namespace {

// Teacher-forced decoder streams for score output: BOS rows, then the target
// attributes of the previous note.
std::vector<std::vector<int>> shifted_score_inputs(const TokenSequence& score_out) {
    const TokenizerManifest& m = default_manifest();
    std::vector<std::vector<int>> in(score_out.streams.size());
    for (std::size_t s = 0; s < in.size(); ++s) {
        int bos = m.score_output[s].size + 1; // row past MASK
        in[s].reserve(score_out.note_count());
        in[s].push_back(bos);
        for (std::size_t i = 0; i + 1 < score_out.streams[s].size(); ++i)
            in[s].push_back(score_out.streams[s][i]);
    }
    return in;
}

void mask_flat_inputs(std::vector<int>& ids, double rate, Rng& rng) {
    for (int& id : ids)
        if (rng.bernoulli(rate)) id = TM::kPerfVocabSize; // MASK row
}

void mask_score_inputs(std::vector<std::vector<int>>& streams, double rate, Rng& rng) {
    const TokenizerManifest& m = default_manifest();
    if (streams.empty()) return;
    for (std::size_t i = 0; i < streams[0].size(); ++i) {
        if (!rng.bernoulli(rate)) continue;
        for (std::size_t s = 0; s < streams.size(); ++s)
            streams[s][i] = m.score_output[s].size; // MASK row
    }
}

} // namespace

NodeId JointModel::loss_epr(Bind& bind, const ScoreItem& x, const PerfItem& y, Rng& rng,
                            std::vector<StylePosterior>* posteriors) const {
    Tape& t = bind.tape();
    NodeId z_x = score_content(bind, x.in);
    StylePosterior post = style_posterior(bind, y.in);
    if (posteriors) posteriors->push_back(post);
    NodeId z_s = cfg_.sample_style ? reparameterize(bind, post, rng) : post.mean;
    NodeId memory = t.add_rowvec(z_x, z_s);

    std::vector<int> inputs = shifted_flat_inputs(y.out.events);
    mask_flat_inputs(inputs, cfg_.decoder_mask_rate, rng);
    std::vector<int> targets(y.out.events.begin() + 1, y.out.events.end());
    NodeId logits = perf_logits(bind, memory, inputs);
    return t.cross_entropy(logits, targets, TM::kPad);
}

NodeId JointModel::loss_apt(Bind& bind, const PerfItem& y, const ScoreItem& x, Rng& rng) const {
    Tape& t = bind.tape();
    NodeId z_y = perf_content(bind, y.in);
    std::vector<std::vector<int>> inputs = shifted_score_inputs(x.out);
    mask_score_inputs(inputs, cfg_.decoder_mask_rate, rng);
    std::vector<NodeId> heads = score_logits(bind, z_y, inputs);
    NodeId sum = -1;
    for (std::size_t s = 0; s < heads.size(); ++s) {
        NodeId ce = t.cross_entropy(heads[s], x.out.streams[s], -1);
        sum = sum < 0 ? ce : t.add(sum, ce);
    }
    return t.scale(sum, 1.0 / double(heads.size()));
}

NodeId JointModel::loss_rec_score(Bind& bind, const ScoreItem& x, Rng& rng) const {
    Tape& t = bind.tape();
    TokenSequence masked = mask_tokens(x.in, cfg_.encoder_mask_rate, rng);
    NodeId z = score_content(bind, masked);
    std::vector<std::vector<int>> inputs = shifted_score_inputs(x.out);
    mask_score_inputs(inputs, cfg_.decoder_mask_rate, rng);
    std::vector<NodeId> heads = score_logits(bind, z, inputs);
    NodeId sum = -1;
    for (std::size_t s = 0; s < heads.size(); ++s) {
        NodeId ce = t.cross_entropy(heads[s], x.out.streams[s], -1);
        sum = sum < 0 ? ce : t.add(sum, ce);
    }
    return t.scale(sum, 1.0 / double(heads.size()));
}

NodeId JointModel::loss_rec_perf(Bind& bind, const PerfItem& y, Rng& rng,
                                 std::vector<StylePosterior>* posteriors) const {
    Tape& t = bind.tape();
    TokenSequence masked = mask_tokens(y.in, cfg_.encoder_mask_rate, rng);
    NodeId z_c = perf_content(bind, masked);
    StylePosterior post = style_posterior(bind, y.in); // style reads the unmasked sequence
    if (posteriors) posteriors->push_back(post);
    NodeId z_s = cfg_.sample_style ? reparameterize(bind, post, rng) : post.mean;
    NodeId memory = t.add_rowvec(z_c, z_s);

    std::vector<int> inputs = shifted_flat_inputs(y.out.events);
    mask_flat_inputs(inputs, cfg_.decoder_mask_rate, rng);
    std::vector<int> targets(y.out.events.begin() + 1, y.out.events.end());
    NodeId logits = perf_logits(bind, memory, inputs);
    return t.cross_entropy(logits, targets, TM::kPad);
}

LossBreakdown JointModel::TotalLossNodes::values(const Tape& tape) const {
    LossBreakdown b;
    auto item = [&](NodeId id) { return id < 0 ? 0.0 : tape.val(id).item(); };
    b.total = item(total);
    b.epr = item(epr);
    b.apt = item(apt);
    b.rec_x = item(rec_x);
    b.rec_y = item(rec_y);
    b.kl = item(kl);
    return b;
}

JointModel::TotalLossNodes JointModel::total_loss(Bind& bind, const BatchRef& batch,
                                                  Rng& rng) const {
    Tape& t = bind.tape();
    std::vector<StylePosterior> posteriors;

    auto mean_of = [&](const std::vector<NodeId>& parts) -> NodeId {
        if (parts.empty()) return -1;
        NodeId sum = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) sum = t.add(sum, parts[i]);
        return parts.size() == 1 ? sum : t.scale(sum, 1.0 / double(parts.size()));
    };

    std::vector<NodeId> epr_parts, apt_parts, rx_parts, ry_parts;
    for (const auto& [x, y] : batch.epr) epr_parts.push_back(loss_epr(bind, *x, *y, rng, &posteriors));
    for (const auto& [y, x] : batch.apt) apt_parts.push_back(loss_apt(bind, *y, *x, rng));
    for (const ScoreItem* x : batch.rec_score) rx_parts.push_back(loss_rec_score(bind, *x, rng));
    for (const PerfItem* y : batch.rec_perf) ry_parts.push_back(loss_rec_perf(bind, *y, rng, &posteriors));

    TotalLossNodes nodes;
    nodes.epr = mean_of(epr_parts);
    nodes.apt = mean_of(apt_parts);
    nodes.rec_x = mean_of(rx_parts);
    nodes.rec_y = mean_of(ry_parts);

    if (!posteriors.empty()) {
        std::vector<NodeId> means, logvars;
        for (const StylePosterior& p : posteriors) {
            means.push_back(p.mean);
            logvars.push_back(p.logvar);
        }
        nodes.kl = t.kl_gaussian(t.concat_rows(means), t.concat_rows(logvars));
    }

    NodeId total = -1;
    auto accumulate = [&](NodeId part) {
        if (part < 0) return;
        total = total < 0 ? part : t.add(total, part);
    };
    accumulate(nodes.epr);
    accumulate(nodes.apt);
    if (cfg_.lambda_rec != 0.0 && (nodes.rec_x >= 0 || nodes.rec_y >= 0)) {
        NodeId rec = nodes.rec_x >= 0 && nodes.rec_y >= 0 ? t.add(nodes.rec_x, nodes.rec_y)
                     : nodes.rec_x >= 0                   ? nodes.rec_x
                                                          : nodes.rec_y;
        accumulate(t.scale(rec, cfg_.lambda_rec));
    }
    if (cfg_.lambda_kl != 0.0 && nodes.kl >= 0) accumulate(t.scale(nodes.kl, cfg_.lambda_kl));
    if (total < 0) throw DegenerateBatch("total_loss: batch has no samples");
    nodes.total = total;
    return nodes;
}

namespace {

// Deterministic cycling sampler: seeded shuffle, reshuffled at wrap.
class Cycler {
public:
    Cycler(std::size_t n, Rng rng) : rng_(rng) {
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
        shuffle();
    }
    std::size_t next() {
        if (pos_ == order_.size()) {
            shuffle();
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    void shuffle() {
        for (std::size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng_.below(i)]);
    }
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    Rng rng_;
};

} // namespace

LossBreakdown JointModel::train(const JointDataset& data, const TrainOptions& opt) {
    if (opt.steps < 1) throw ConfigError("train: steps must be >= 1");
    if (opt.batch_per_subtask < 1) throw ConfigError("train: batch_per_subtask must be >= 1");
    if (opt.unpaired_ratio < 0.0 || opt.unpaired_ratio > 1.0)
        throw ConfigError("train: unpaired_ratio outside [0,1]");
    if (data.paired.empty()) throw ConfigError("train: paired dataset is empty");

    std::size_t n_su = std::size_t(std::ceil(opt.unpaired_ratio * double(data.scores_unpaired.size())));
    std::size_t n_pu = std::size_t(std::ceil(opt.unpaired_ratio * double(data.perfs_unpaired.size())));
    bool rec_enabled = opt.unpaired_ratio > 0.0;
    if (rec_enabled && (data.scores_unpaired.empty() || data.perfs_unpaired.empty()))
        throw ConfigError("train: unpaired_ratio > 0 but an unpaired pool is empty");

    auto check_len = [&](std::size_t n) {
        if (int(n) > cfg_.max_notes)
            throw ConfigError("train: sequence of " + std::to_string(n) +
                              " notes exceeds the " + std::to_string(cfg_.max_notes) +
                              "-note limit");
    };
    for (const auto& [x, y] : data.paired) {
        check_len(x.in.note_count());
        check_len(y.in.note_count());
    }
    for (std::size_t i = 0; i < n_su; ++i) check_len(data.scores_unpaired[i].in.note_count());
    for (std::size_t i = 0; i < n_pu; ++i) check_len(data.perfs_unpaired[i].in.note_count());

    Rng master(opt.seed);
    Cycler epr_cycle(data.paired.size(), master.fork());
    Cycler apt_cycle(data.paired.size(), master.fork());
    Cycler rsx_cycle(rec_enabled ? n_su : 1, master.fork());
    Cycler rsy_cycle(rec_enabled ? n_pu : 1, master.fork());

    std::ofstream csv;
    if (!opt.loss_csv.empty()) {
        bool fresh = !std::ifstream(opt.loss_csv).good();
        csv.open(opt.loss_csv, std::ios::app);
        if (!csv) throw IoError("cannot write " + opt.loss_csv);
        if (fresh) csv << "step,lr,total,epr,apt,rec_x,rec_y,kl\n";
    }

    AdamW adamw;
    LossBreakdown last;
    for (long long step = 1; step <= opt.steps; ++step) {
        BatchRef batch;
        for (int i = 0; i < opt.batch_per_subtask; ++i) {
            const auto& [ex, ey] = data.paired[epr_cycle.next()];
            batch.epr.emplace_back(&ex, &ey);
            const auto& [ax, ay] = data.paired[apt_cycle.next()];
            batch.apt.emplace_back(&ay, &ax);
            if (rec_enabled) {
                batch.rec_score.push_back(&data.scores_unpaired[rsx_cycle.next()]);
                batch.rec_perf.push_back(&data.perfs_unpaired[rsy_cycle.next()]);
            }
        }

        Tape tape;
        Bind bind(tape, params_);
        TotalLossNodes nodes = total_loss(bind, batch, master);
        last = nodes.values(tape);
        for (double v : {last.total, last.epr, last.apt, last.rec_x, last.rec_y, last.kl}) {
            if (!std::isfinite(v))
                throw StateError("train: non-finite loss at step " + std::to_string(step) +
                                 " (total=" + format_double(last.total) +
                                 " epr=" + format_double(last.epr) +
                                 " apt=" + format_double(last.apt) +
                                 " rec_x=" + format_double(last.rec_x) +
                                 " rec_y=" + format_double(last.rec_y) +
                                 " kl=" + format_double(last.kl) + ")");
        }
        tape.backward(nodes.total);

        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : bind.bound()) {
            const Tensor& g = tape.grad(id);
            if (g.numel() > 0) grads.emplace(name, g);
        }
        double lr = lr_schedule(step, opt.warmup, opt.steps, opt.peak_lr);
        adamw.step(params_, grads, lr);

        if (csv.is_open()) {
            csv << step << ',' << format_double(lr) << ',' << format_double(last.total) << ','
                << format_double(last.epr) << ',' << format_double(last.apt) << ','
                << format_double(last.rec_x) << ',' << format_double(last.rec_y) << ','
                << format_double(last.kl) << '\n';
        }
        if (opt.stop_when_below > 0 && last.epr < opt.stop_when_below &&
            last.apt < opt.stop_when_below)
            break;
    }
    return last;
}

namespace {

enum class PerfExpect { shift_or_on, velocity, duration };

bool perf_token_allowed(int id, PerfExpect state) {
    if (id == TM::kPad || id == TM::kBos) return false;
    if (id >= TM::kTimeShiftBase) return state == PerfExpect::shift_or_on;
    if (id >= TM::kDurationBase) return state == PerfExpect::duration;
    if (id >= TM::kVelocityBase) return state == PerfExpect::velocity;
    return state == PerfExpect::shift_or_on; // Note-On
}

int pick_token(const Tensor& logits_row, const std::vector<char>& allowed,
               const DecodeOptions& opt, Rng& rng, int* repaired) {
    std::size_t V = logits_row.cols;
    int best_all = 0;
    for (std::size_t c = 1; c < V; ++c)
        if (logits_row[c] > logits_row[best_all]) best_all = int(c);

    std::vector<int> order;
    order.reserve(V);
    for (std::size_t c = 0; c < V; ++c)
        if (allowed[c]) order.push_back(int(c));
    if (order.empty()) throw StateError("decode: no grammar-valid token available");
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return logits_row[a] > logits_row[b]; });

    if (!allowed[best_all] && repaired) ++*repaired;
    if (opt.mode == DecodeOptions::Mode::greedy) return order.front();

    int k = std::min<int>(opt.k, int(order.size()));
    double mx = logits_row[order[0]];
    std::vector<double> w(k);
    double z = 0;
    for (int i = 0; i < k; ++i) {
        w[i] = std::exp(logits_row[order[i]] - mx);
        z += w[i];
    }
    double u = rng.uniform() * z;
    double acc = 0;
    for (int i = 0; i < k; ++i) {
        acc += w[i];
        if (u <= acc) return order[i];
    }
    return order[k - 1];
}

} // namespace

NoteSequence JointModel::render(const TokenSequence& score_in, const Tensor& style,
                                const DecodeOptions& opt, RepairReport* report) {
    if (score_in.note_count() == 0) throw EmptySequence("render: empty score");
    if (style.rows != 1 || int(style.cols) != cfg_.tf.model_dim)
        throw ShapeError("render: style vector dimension mismatch");

    Tensor memory;
    {
        Tape tape;
        Bind bind(tape, params_, false);
        NodeId z_x = score_content(bind, score_in);
        NodeId mem = tape.add_rowvec(z_x, tape.constant(style));
        memory = tape.val(mem);
    }

    std::size_t N = score_in.note_count();
    std::size_t cap = std::min<std::size_t>(std::size_t(opt.max_tokens_per_note) * N,
                                            std::size_t(opt.token_cap));
    Rng rng(opt.seed);
    std::vector<int> ids = {TM::kBos};
    PerfExpect state = PerfExpect::shift_or_on;
    std::size_t notes_done = 0;
    RepairReport local;

    while (notes_done < N && ids.size() < cap + 1) {
        Tape tape;
        Bind bind(tape, params_, false);
        NodeId logits = perf_logits(bind, tape.constant(memory), ids);
        const Tensor& L = tape.val(logits);
        Tensor row(1, L.cols);
        for (std::size_t c = 0; c < L.cols; ++c) row[c] = L.at(L.rows - 1, c);

        std::vector<char> allowed(TM::kPerfVocabSize, 0);
        for (int c = 0; c < TM::kPerfVocabSize; ++c)
            allowed[c] = perf_token_allowed(c, state) ? 1 : 0;
        int id = pick_token(row, allowed, opt, rng, &local.repaired);
        ids.push_back(id);
        ++local.emitted;
        if (id >= TM::kTimeShiftBase) {
            // stay in shift_or_on
        } else if (id >= TM::kDurationBase) {
            state = PerfExpect::shift_or_on;
            ++notes_done;
        } else if (id >= TM::kVelocityBase) {
            state = PerfExpect::duration;
        } else {
            state = PerfExpect::velocity;
        }
    }
    // Drop a trailing incomplete note so the stream always decodes.
    while (state != PerfExpect::shift_or_on) {
        ids.pop_back();
        PerfExpect s = PerfExpect::shift_or_on;
        for (std::size_t i = 1; i < ids.size(); ++i) {
            int id = ids[i];
            if (id >= TM::kTimeShiftBase) continue;
            if (id >= TM::kDurationBase) s = PerfExpect::shift_or_on;
            else if (id >= TM::kVelocityBase) s = PerfExpect::duration;
            else s = PerfExpect::velocity;
        }
        state = s;
    }
    if (report) *report = local;

    TokenSequence out;
    out.layout = TokenLayout::perf_output;
    out.manifest = manifest_hash(default_manifest());
    out.events = std::move(ids);
    return decode(out);
}

NoteSequence JointModel::transcribe(const TokenSequence& perf_in, const DecodeOptions& opt) {
    if (perf_in.note_count() == 0) throw EmptySequence("transcribe: empty performance");
    const TokenizerManifest& m = default_manifest();

    Tensor memory;
    {
        Tape tape;
        Bind bind(tape, params_, false);
        memory = tape.val(perf_content(bind, perf_in));
    }

    std::size_t N = perf_in.note_count();
    Rng rng(opt.seed);
    std::vector<std::vector<int>> inputs(m.score_output.size());
    for (std::size_t s = 0; s < inputs.size(); ++s)
        inputs[s].push_back(m.score_output[s].size + 1); // BOS row
    std::vector<std::vector<int>> outputs(m.score_output.size());

    for (std::size_t i = 0; i < N; ++i) {
        Tape tape;
        Bind bind(tape, params_, false);
        std::vector<NodeId> heads = score_logits(bind, tape.constant(memory), inputs);
        for (std::size_t s = 0; s < heads.size(); ++s) {
            const Tensor& L = tape.val(heads[s]);
            Tensor row(1, L.cols);
            for (std::size_t c = 0; c < L.cols; ++c) row[c] = L.at(L.rows - 1, c);
            std::vector<char> allowed(L.cols, 1);
            int id = pick_token(row, allowed, opt, rng, nullptr);
            outputs[s].push_back(id);
        }
        for (std::size_t s = 0; s < inputs.size(); ++s) inputs[s].push_back(outputs[s].back());
    }

    TokenSequence out;
    out.layout = TokenLayout::score_output;
    out.manifest = manifest_hash(m);
    out.streams = std::move(outputs);
    return decode(out);
}

Tensor JointModel::extract_style(const TokenSequence& perf_in) {
    std::size_t N = perf_in.note_count();
    if (N == 0) throw EmptySequence("extract_style: empty performance");
    std::size_t chunk = std::size_t(cfg_.max_notes);
    Tensor acc(1, cfg_.tf.model_dim);
    std::size_t chunks = 0;
    for (std::size_t start = 0; start < N; start += chunk) {
        std::size_t count = std::min(chunk, N - start);
        TokenSequence piece;
        piece.layout = perf_in.layout;
        piece.manifest = perf_in.manifest;
        piece.streams.resize(perf_in.streams.size());
        for (std::size_t s = 0; s < perf_in.streams.size(); ++s)
            piece.streams[s].assign(perf_in.streams[s].begin() + start,
                                    perf_in.streams[s].begin() + start + count);
        Tape tape;
        Bind bind(tape, params_, false);
        StylePosterior post = style_posterior(bind, piece);
        const Tensor& mean = tape.val(post.mean);
        for (std::size_t c = 0; c < acc.data.size(); ++c) acc.data[c] += mean.data[c];
        ++chunks;
    }
    for (double& x : acc.data) x /= double(chunks);
    return acc;
}

void JointModel::save(const std::string& path) const {
    nlohmann::ordered_json meta;
    meta["kind"] = "joint";
    meta["layers"] = cfg_.tf.layers;
    meta["heads"] = cfg_.tf.heads;
    meta["model_dim"] = cfg_.tf.model_dim;
    meta["ffn_hidden"] = cfg_.tf.ffn_hidden;
    meta["lambda_rec"] = cfg_.lambda_rec;
    meta["lambda_kl"] = cfg_.lambda_kl;
    meta["encoder_mask_rate"] = cfg_.encoder_mask_rate;
    meta["decoder_mask_rate"] = cfg_.decoder_mask_rate;
    meta["sample_style"] = cfg_.sample_style;
    meta["max_notes"] = cfg_.max_notes;
    meta["tokenizer"] = manifest_hash(default_manifest());
    meta["init_seed"] = params_.seed();
    save_checkpoint(path, params_, meta.dump());
}

JointModel JointModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.meta_json);
    } catch (const std::exception& e) {
        throw ParseError(std::string("checkpoint meta: ") + e.what());
    }
    if (meta.value("kind", "") != "joint")
        throw StateError("checkpoint at " + path + " is not a joint model");
    std::string expected = manifest_hash(default_manifest());
    std::string have = meta.value("tokenizer", "");
    if (have != expected)
        throw StateError("checkpoint tokenizer manifest " + have +
                         " does not match this build's tokenizer (" + expected + ")");
    JointConfig cfg;
    cfg.tf.layers = meta.value("layers", cfg.tf.layers);
    cfg.tf.heads = meta.value("heads", cfg.tf.heads);
    cfg.tf.model_dim = meta.value("model_dim", cfg.tf.model_dim);
    cfg.tf.ffn_hidden = meta.value("ffn_hidden", cfg.tf.ffn_hidden);
    cfg.lambda_rec = meta.value("lambda_rec", cfg.lambda_rec);
    cfg.lambda_kl = meta.value("lambda_kl", cfg.lambda_kl);
    cfg.encoder_mask_rate = meta.value("encoder_mask_rate", cfg.encoder_mask_rate);
    cfg.decoder_mask_rate = meta.value("decoder_mask_rate", cfg.decoder_mask_rate);
    cfg.sample_style = meta.value("sample_style", cfg.sample_style);
    cfg.max_notes = meta.value("max_notes", cfg.max_notes);
    JointModel model(cfg, meta.value("init_seed", std::uint64_t(0x5eedf00dULL)));
    load_into(model.params_, ck);
    return model;
}

} // namespace scoreperf
