#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "scoreperf/tensor.hpp"

namespace scoreperf {

using NodeId = std::int32_t;

// Reverse-mode autodiff tape over rank-2 float64 tensors. A training step
// builds one graph, calls backward once on a scalar root, then reads leaf
// gradients. Single-threaded and deterministic.
class Tape {
public:
    NodeId leaf(Tensor value, bool needs_grad = false);
    NodeId constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
    std::size_t size() const { return nodes_.size(); }

    // Elementwise and scalar-weight arithmetic.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId exp(NodeId a);
    NodeId swish(NodeId a); // x * sigmoid(x)

    // Linear algebra.
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);

    // Shape surgery.
    NodeId slice_rows(NodeId a, std::size_t start, std::size_t count);
    NodeId slice_cols(NodeId a, std::size_t start, std::size_t count);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);

    // Broadcast: row n of the output is a[n] + v (v is [1,D]).
    NodeId add_rowvec(NodeId a, NodeId v);

    // Embedding lookup: out[n] = table[ids[n]]; backward scatter-adds.
    NodeId gather_rows(NodeId table, const std::vector<int>& ids);

    // Fused normalization over the last dimension, learnable gain/bias [1,D].
    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);

    // Rotary position mixing: row m rotates feature pairs by m * base^(-2j/d).
    NodeId rotary(NodeId x, double base = 10000.0);

    // Row softmax with a 0/1 allow-mask; fully-masked rows output zeros.
    NodeId masked_softmax_rows(NodeId scores, const Tensor& allow);

    // Reductions.
    NodeId sum_all(NodeId a);
    NodeId mean_all(NodeId a);

    // Mean NLL over positions whose target != ignore_id; all ignored -> DegenerateBatch.
    NodeId cross_entropy(NodeId logits, const std::vector<int>& targets, int ignore_id = -1);

    // Mean over rows of 0.5 * sum_d(mu^2 + exp(lv) - 1 - lv).
    NodeId kl_gaussian(NodeId mean, NodeId logvar);

    // Seeds d(root)=1 and propagates; root must be a scalar.
    void backward(NodeId root);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void()> back; // null for leaves
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void()> back);
    void ensure_grad(NodeId id);
    bool wants(NodeId id) const { return nodes_[id].needs_grad; }

    std::vector<Node> nodes_;
};

} // namespace scoreperf
