#include "scoreperf/nn.hpp"

#include <cmath>

#include "scoreperf/errors.hpp"
#include "scoreperf/vocab.hpp"

namespace scoreperf {

void TransformerConfig::validate() const {
    if (layers < 1) throw ConfigError("transformer: layers must be >= 1");
    if (heads < 1) throw ConfigError("transformer: heads must be >= 1");
    if (model_dim % heads != 0) throw ConfigError("transformer: model_dim not divisible by heads");
    if (head_dim() % 2 != 0) throw ConfigError("transformer: head dimension must be even");
    if (ffn_hidden < 1) throw ConfigError("transformer: ffn_hidden must be >= 1");
}

Tensor& ParamStore::param(const std::string& name, std::size_t rows, std::size_t cols,
                          Init init) {
    auto it = values_.find(name);
    if (it != values_.end()) {
        if (it->second.rows != rows || it->second.cols != cols)
            throw ShapeError("param '" + name + "' requested with a different shape");
        return it->second;
    }
    Tensor t(rows, cols);
    switch (init) {
        case Init::zeros: break;
        case Init::ones: std::fill(t.data.begin(), t.data.end(), 1.0); break;
        case Init::normal: {
            Rng rng(seed_ ^ fnv1a64(name));
            for (double& x : t.data) x = rng.normal() * 0.02;
            break;
        }
    }
    order_.push_back(name);
    return values_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw StateError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw StateError("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::set(const std::string& name, Tensor value) {
    auto it = values_.find(name);
    if (it == values_.end()) {
        order_.push_back(name);
        values_.emplace(name, std::move(value));
    } else {
        it->second = std::move(value);
    }
}

NodeId Bind::operator()(const std::string& name, std::size_t rows, std::size_t cols, Init init) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Tensor& t = store_.param(name, rows, cols, init);
    NodeId id = tape_.leaf(t, track_);
    bound_.emplace(name, id);
    return id;
}

Tensor full_mask(std::size_t rows, std::size_t cols) { return Tensor::full(rows, cols, 1.0); }

Tensor causal_mask(std::size_t n) {
    Tensor m(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c <= r; ++c) m.at(r, c) = 1.0;
    return m;
}

NodeId embed_notes(Bind& bind, const std::string& prefix,
                   const std::vector<std::vector<int>>& streams,
                   const std::vector<Vocabulary>& vocabs, int model_dim, int extra_rows) {
    if (streams.size() != vocabs.size())
        throw ShapeError("embed_notes: stream count does not match vocabulary count");
    Tape& t = bind.tape();
    NodeId sum = -1;
    for (std::size_t k = 0; k < streams.size(); ++k) {
        NodeId table = bind(prefix + "." + vocabs[k].name + ".embed",
                            vocabs[k].size + extra_rows, model_dim, Init::normal);
        NodeId rows = t.gather_rows(table, streams[k]);
        sum = sum < 0 ? rows : t.add(sum, rows);
    }
    if (sum < 0) throw ShapeError("embed_notes: no streams");
    return sum;
}

NodeId embed_flat(Bind& bind, const std::string& name, const std::vector<int>& ids,
                  int vocab_rows, int model_dim) {
    NodeId table = bind(name, vocab_rows, model_dim, Init::normal);
    return bind.tape().gather_rows(table, ids);
}

NodeId multihead_attention(Bind& bind, const std::string& prefix, NodeId query_in, NodeId kv_in,
                           const Tensor& allow, const TransformerConfig& cfg, bool use_rotary) {
    cfg.validate();
    Tape& t = bind.tape();
    std::size_t D = cfg.model_dim, dh = cfg.head_dim();
    if (t.val(query_in).cols != D || t.val(kv_in).cols != D)
        throw ShapeError("attention: input width != model_dim");
    if (allow.rows != t.val(query_in).rows || allow.cols != t.val(kv_in).rows)
        throw ShapeError("attention: mask shape does not match sequence lengths");

    NodeId wq = bind(prefix + ".wq", D, D, Init::normal);
    NodeId wk = bind(prefix + ".wk", D, D, Init::normal);
    NodeId wv = bind(prefix + ".wv", D, D, Init::normal);
    NodeId wo = bind(prefix + ".wo", D, D, Init::normal);

    NodeId q = t.matmul(query_in, wq);
    NodeId k = t.matmul(kv_in, wk);
    NodeId v = t.matmul(kv_in, wv);

    std::vector<NodeId> heads;
    heads.reserve(cfg.heads);
    double inv_sqrt = 1.0 / std::sqrt(double(dh));
    for (int h = 0; h < cfg.heads; ++h) {
        NodeId qh = t.slice_cols(q, h * dh, dh);
        NodeId kh = t.slice_cols(k, h * dh, dh);
        NodeId vh = t.slice_cols(v, h * dh, dh);
        if (use_rotary) {
            qh = t.rotary(qh, cfg.rotary_base);
            kh = t.rotary(kh, cfg.rotary_base);
        }
        NodeId scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
        NodeId probs = t.masked_softmax_rows(scores, allow);
        heads.push_back(t.matmul(probs, vh));
    }
    return t.matmul(t.concat_cols(heads), wo);
}

NodeId swiglu_ffn(Bind& bind, const std::string& prefix, NodeId x, const TransformerConfig& cfg) {
    Tape& t = bind.tape();
    std::size_t D = cfg.model_dim, F = cfg.ffn_hidden;
    if (t.val(x).cols != D) throw ShapeError("swiglu_ffn: input width != model_dim");
    NodeId wg = bind(prefix + ".w_gate", D, F, Init::normal);
    NodeId wu = bind(prefix + ".w_up", D, F, Init::normal);
    NodeId wd = bind(prefix + ".w_down", F, D, Init::normal);
    NodeId h = t.mul(t.swish(t.matmul(x, wg)), t.matmul(x, wu));
    return t.matmul(h, wd);
}

namespace {

NodeId pre_ln(Bind& bind, const std::string& prefix, NodeId x, std::size_t D) {
    NodeId gain = bind(prefix + ".gain", 1, D, Init::ones);
    NodeId bias = bind(prefix + ".bias", 1, D, Init::zeros);
    return bind.tape().layer_norm(x, gain, bias);
}

} // namespace

NodeId encoder_forward(Bind& bind, const std::string& prefix, NodeId x, const Tensor& allow,
                       const TransformerConfig& cfg) {
    cfg.validate();
    Tape& t = bind.tape();
    std::size_t D = cfg.model_dim;
    for (int l = 0; l < cfg.layers; ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        NodeId h = pre_ln(bind, lp + ".ln1", x, D);
        x = t.add(x, multihead_attention(bind, lp + ".attn", h, h, allow, cfg, true));
        NodeId h2 = pre_ln(bind, lp + ".ln2", x, D);
        x = t.add(x, swiglu_ffn(bind, lp + ".ffn", h2, cfg));
    }
    return x;
}

NodeId decoder_forward(Bind& bind, const std::string& prefix, NodeId x, NodeId memory,
                       const TransformerConfig& cfg) {
    cfg.validate();
    Tape& t = bind.tape();
    std::size_t D = cfg.model_dim;
    std::size_t n = t.val(x).rows, m = t.val(memory).rows;
    Tensor causal = causal_mask(n);
    Tensor cross = full_mask(n, m);
    for (int l = 0; l < cfg.layers; ++l) {
        std::string lp = prefix + ".layer" + std::to_string(l);
        NodeId h = pre_ln(bind, lp + ".ln1", x, D);
        x = t.add(x, multihead_attention(bind, lp + ".self", h, h, causal, cfg, true));
        NodeId h2 = pre_ln(bind, lp + ".ln2", x, D);
        x = t.add(x, multihead_attention(bind, lp + ".cross", h2, memory, cross, cfg, false));
        NodeId h3 = pre_ln(bind, lp + ".ln3", x, D);
        x = t.add(x, swiglu_ffn(bind, lp + ".ffn", h3, cfg));
    }
    return x;
}

StylePosterior style_encode(Bind& bind, const std::string& prefix, NodeId embedded,
                            const TransformerConfig& cfg) {
    Tape& t = bind.tape();
    std::size_t D = cfg.model_dim;
    NodeId cls = bind(prefix + ".cls", 1, D, Init::normal);
    NodeId seq = t.concat_rows({cls, embedded});
    std::size_t n = t.val(seq).rows;
    NodeId hidden = encoder_forward(bind, prefix, seq, full_mask(n, n), cfg);
    NodeId summary = t.slice_rows(hidden, 0, 1);
    NodeId w_mean = bind(prefix + ".head_mean", D, D, Init::zeros);
    NodeId w_logvar = bind(prefix + ".head_logvar", D, D, Init::zeros);
    return {t.matmul(summary, w_mean), t.matmul(summary, w_logvar)};
}

NodeId reparameterize(Bind& bind, const StylePosterior& post, Rng& rng) {
    Tape& t = bind.tape();
    const Tensor& mu = t.val(post.mean);
    Tensor eps = Tensor::randn(mu.rows, mu.cols, rng);
    NodeId std_dev = t.exp(t.scale(post.logvar, 0.5));
    return t.add(post.mean, t.mul(std_dev, t.constant(std::move(eps))));
}

NodeId output_head(Bind& bind, const std::string& name, NodeId x, int vocab_size) {
    Tape& t = bind.tape();
    NodeId w = bind(name, t.val(x).cols, vocab_size, Init::zeros);
    return t.matmul(x, w);
}

TokenSequence mask_tokens(const TokenSequence& tokens, double rate, Rng& rng) {
    if (rate < 0.0 || rate > 1.0) throw DomainError("mask_tokens: rate outside [0,1]");
    TokenSequence out = tokens;
    const TokenizerManifest& m = default_manifest();
    if (tokens.parallel()) {
        const std::vector<Vocabulary>& vocabs = layout_vocabs(m, tokens.layout);
        for (std::size_t i = 0; i < out.note_count(); ++i) {
            if (!rng.bernoulli(rate)) continue;
            for (std::size_t s = 0; s < out.streams.size(); ++s)
                out.streams[s][i] = vocabs[s].size; // the MASK row past the vocabulary
        }
    } else {
        for (int& id : out.events)
            if (rng.bernoulli(rate)) id = TokenizerManifest::kPerfVocabSize;
    }
    return out;
}

} // namespace scoreperf
