#pragma once

#include <map>
#include <string>
#include <vector>

#include "scoreperf/tape.hpp"
#include "scoreperf/tokenize.hpp"

namespace scoreperf {

struct TransformerConfig {
    int layers = 6;
    int heads = 8;
    int model_dim = 512;
    int ffn_hidden = 3072;
    double rotary_base = 10000.0;

    int head_dim() const { return model_dim / heads; }
    void validate() const;
};

enum class Init { zeros, ones, normal }; // normal: std 0.02, seeded per name

// Named parameter tensors. Creation is lazy and the initializer is seeded by
// the parameter name, so values do not depend on creation order.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0x5eedf00dULL) : seed_(seed) {}

    Tensor& param(const std::string& name, std::size_t rows, std::size_t cols, Init init);
    bool has(const std::string& name) const { return values_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void set(const std::string& name, Tensor value);
    const std::vector<std::string>& names() const { return order_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::map<std::string, Tensor> values_;
    std::vector<std::string> order_;
};

// Binds parameters into a tape as gradient-tracked leaves, once per name.
class Bind {
public:
    Bind(Tape& tape, ParamStore& store, bool track_grads = true)
        : tape_(tape), store_(store), track_(track_grads) {}

    NodeId operator()(const std::string& name, std::size_t rows, std::size_t cols, Init init);
    const std::map<std::string, NodeId>& bound() const { return bound_; }
    Tape& tape() { return tape_; }
    ParamStore& store() { return store_; }

private:
    Tape& tape_;
    ParamStore& store_;
    bool track_;
    std::map<std::string, NodeId> bound_;
};

// Attention allow-masks (1 = may attend).
Tensor full_mask(std::size_t rows, std::size_t cols);
Tensor causal_mask(std::size_t n);

// Sum of per-attribute embedding lookups; tables get `extra_rows` rows past
// each vocabulary (MASK, and BOS for decoder-input tables).
NodeId embed_notes(Bind& bind, const std::string& prefix,
                   const std::vector<std::vector<int>>& streams,
                   const std::vector<Vocabulary>& vocabs, int model_dim, int extra_rows);

// Single flat-vocabulary embedding lookup.
NodeId embed_flat(Bind& bind, const std::string& name, const std::vector<int>& ids,
                  int vocab_rows, int model_dim);

NodeId multihead_attention(Bind& bind, const std::string& prefix, NodeId query_in, NodeId kv_in,
                           const Tensor& allow, const TransformerConfig& cfg, bool use_rotary);

NodeId swiglu_ffn(Bind& bind, const std::string& prefix, NodeId x, const TransformerConfig& cfg);

// Pre-LN residual stack; no final normalization, so zero block weights give
// the identity map.
NodeId encoder_forward(Bind& bind, const std::string& prefix, NodeId x, const Tensor& allow,
                       const TransformerConfig& cfg);

// Causal self-attention plus cross-attention to `memory`.
NodeId decoder_forward(Bind& bind, const std::string& prefix, NodeId x, NodeId memory,
                       const TransformerConfig& cfg);

struct StylePosterior {
    NodeId mean;   // [1, D]
    NodeId logvar; // [1, D]
};

// CLS-token summary: prepend a learned row, encode, read row 0 through two
// linear heads (zero-initialized, so the initial posterior is N(mean0, I)).
StylePosterior style_encode(Bind& bind, const std::string& prefix, NodeId embedded,
                            const TransformerConfig& cfg);

// z = mean + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from rng.
NodeId reparameterize(Bind& bind, const StylePosterior& post, Rng& rng);

// Linear output head, zero-initialized.
NodeId output_head(Bind& bind, const std::string& name, NodeId x, int vocab_size);

// Per-note masking for parallel layouts (all attribute streams together),
// per-event for the flat layout; mask id = vocabulary size (the extra row).
TokenSequence mask_tokens(const TokenSequence& tokens, double rate, Rng& rng);

} // namespace scoreperf
