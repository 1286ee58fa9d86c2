#include "scoreperf/tape.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "scoreperf/errors.hpp"

namespace scoreperf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

CMap as_map(const Tensor& t) { return CMap(t.data.data(), t.rows, t.cols); }
Map as_map(Tensor& t) { return Map(t.data.data(), t.rows, t.cols); }

} // namespace

NodeId Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return NodeId(nodes_.size() - 1);
}

void Tape::ensure_grad(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.numel() != n.value.numel())
        n.grad = Tensor::zeros(n.value.rows, n.value.cols);
}

NodeId Tape::leaf(Tensor value, bool needs_grad) {
    return push(std::move(value), needs_grad, nullptr);
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    NodeId id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        if (wants(a)) {
            ensure_grad(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[a].grad.data[i] += g.data[i];
        }
        if (wants(b)) {
            ensure_grad(b);
            for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[b].grad.data[i] += g.data[i];
        }
    };
    return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("sub: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    NodeId id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        if (wants(a)) {
            ensure_grad(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[a].grad.data[i] += g.data[i];
        }
        if (wants(b)) {
            ensure_grad(b);
            for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[b].grad.data[i] -= g.data[i];
        }
    };
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw ShapeError("mul: shape mismatch");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    NodeId id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        if (wants(a)) {
            ensure_grad(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                nodes_[a].grad.data[i] += g.data[i] * nodes_[b].value.data[i];
        }
        if (wants(b)) {
            ensure_grad(b);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                nodes_[b].grad.data[i] += g.data[i] * nodes_[a].value.data[i];
        }
    };
    return id;
}

NodeId Tape::scale(NodeId a, double c) {
    Tensor out = val(a);
    for (double& x : out.data) x *= c;
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, c] {
        if (!wants(a)) return;
        ensure_grad(a);
        const Tensor& g = nodes_[id].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[a].grad.data[i] += c * g.data[i];
    };
    return id;
}

NodeId Tape::exp(NodeId a) {
    Tensor out = val(a);
    for (double& x : out.data) x = std::exp(x);
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a] {
        if (!wants(a)) return;
        ensure_grad(a);
        const Tensor& g = nodes_[id].grad;
        const Tensor& y = nodes_[id].value;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            nodes_[a].grad.data[i] += g.data[i] * y.data[i];
    };
    return id;
}

NodeId Tape::swish(NodeId a) {
    const Tensor& A = val(a);
    Tensor out = A;
    for (double& x : out.data) {
        double s = 1.0 / (1.0 + std::exp(-x));
        x = x * s;
    }
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a] {
        if (!wants(a)) return;
        ensure_grad(a);
        const Tensor& g = nodes_[id].grad;
        const Tensor& x = nodes_[a].value;
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-x.data[i]));
            double d = s + x.data[i] * s * (1.0 - s);
            nodes_[a].grad.data[i] += g.data[i] * d;
        }
    };
    return id;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols != B.rows) throw ShapeError("matmul: inner dimension mismatch");
    Tensor out(A.rows, B.cols);
    as_map(out) = as_map(A) * as_map(B);
    NodeId id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b] {
        const Tensor& g = nodes_[id].grad;
        if (wants(a)) {
            ensure_grad(a);
            as_map(nodes_[a].grad) += as_map(g) * as_map(nodes_[b].value).transpose();
        }
        if (wants(b)) {
            ensure_grad(b);
            as_map(nodes_[b].grad) += as_map(nodes_[a].value).transpose() * as_map(g);
        }
    };
    return id;
}

NodeId Tape::transpose(NodeId a) {
    const Tensor& A = val(a);
    Tensor out(A.cols, A.rows);
    as_map(out) = as_map(A).transpose();
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a] {
        if (!wants(a)) return;
        ensure_grad(a);
        as_map(nodes_[a].grad) += as_map(nodes_[id].grad).transpose();
    };
    return id;
}

NodeId Tape::slice_rows(NodeId a, std::size_t start, std::size_t count) {
    const Tensor& A = val(a);
    if (start + count > A.rows) throw ShapeError("slice_rows: out of range");
    Tensor out(count, A.cols);
    std::copy(A.data.begin() + start * A.cols, A.data.begin() + (start + count) * A.cols,
              out.data.begin());
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, start] {
        if (!wants(a)) return;
        ensure_grad(a);
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t i = 0; i < g.data.size(); ++i)
            ga.data[start * ga.cols + i] += g.data[i];
    };
    return id;
}

NodeId Tape::slice_cols(NodeId a, std::size_t start, std::size_t count) {
    const Tensor& A = val(a);
    if (start + count > A.cols) throw ShapeError("slice_cols: out of range");
    Tensor out(A.rows, count);
    for (std::size_t r = 0; r < A.rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out.at(r, c) = A.at(r, start + c);
    NodeId id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, start] {
        if (!wants(a)) return;
        ensure_grad(a);
        const Tensor& g = nodes_[id].grad;
        Tensor& ga = nodes_[a].grad;
        for (std::size_t r = 0; r < g.rows; ++r)
            for (std::size_t c = 0; c < g.cols; ++c) ga.at(r, start + c) += g.at(r, c);
    };
    return id;
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    std::size_t cols = val(parts[0]).cols;
    std::size_t rows = 0;
    bool ng = false;
    for (NodeId p : parts) {
        if (val(p).cols != cols) throw ShapeError("concat_rows: column mismatch");
        rows += val(p).rows;
        ng = ng || wants(p);
    }
    Tensor out(rows, cols);
    std::size_t r = 0;
    for (NodeId p : parts) {
        const Tensor& P = val(p);
        std::copy(P.data.begin(), P.data.end(), out.data.begin() + r * cols);
        r += P.rows;
    }
    NodeId id = push(std::move(out), ng, nullptr);
    std::vector<NodeId> ps = parts;
    nodes_[id].back = [this, id, ps] {
        const Tensor& g = nodes_[id].grad;
        std::size_t r = 0;
        for (NodeId p : ps) {
            Tensor& pv = nodes_[p].value;
            if (wants(p)) {
                ensure_grad(p);
                Tensor& gp = nodes_[p].grad;
                for (std::size_t i = 0; i < pv.numel(); ++i)
                    gp.data[i] += g.data[r * g.cols + i];
            }
            r += pv.rows;
        }
    };
    return id;
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    std::size_t rows = val(parts[0]).rows;
    std::size_t cols = 0;
    bool ng = false;
    for (NodeId p : parts) {
        if (val(p).rows != rows) throw ShapeError("concat_cols: row mismatch");
        cols += val(p).cols;
        ng = ng || wants(p);
    }
    Tensor out(rows, cols);
    std::size_t c0 = 0;
    for (NodeId p : parts) {
        const Tensor& P = val(p);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < P.cols; ++c) out.at(r, c0 + c) = P.at(r, c);
        c0 += P.cols;
    }
    NodeId id = push(std::move(out), ng, nullptr);
    std::vector<NodeId> ps = parts;
    nodes_[id].back = [this, id, ps] {
        const Tensor& g = nodes_[id].grad;
        std::size_t c0 = 0;
        for (NodeId p : ps) {
            const Tensor& pv = nodes_[p].value;
            if (wants(p)) {
                ensure_grad(p);
                Tensor& gp = nodes_[p].grad;
                for (std::size_t r = 0; r < g.rows; ++r)
                    for (std::size_t c = 0; c < pv.cols; ++c) gp.at(r, c) += g.at(r, c0 + c);
            }
            c0 += pv.cols;
        }
    };
    return id;
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
    const Tensor& A = val(a);
    const Tensor& V = val(v);
    if (V.rows != 1 || V.cols != A.cols) throw ShapeError("add_rowvec: vector shape mismatch");
    Tensor out = A;
    for (std::size_t r = 0; r < A.rows; ++r)
        for (std::size_t c = 0; c < A.cols; ++c) out.at(r, c) += V.data[c];
    NodeId id = push(std::move(out), wants(a) || wants(v), nullptr);
    nodes_[id].back = [this, id, a, v] {
        const Tensor& g = nodes_[id].grad;
        if (wants(a)) {
            ensure_grad(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) nodes_[a].grad.data[i] += g.data[i];
        }
        if (wants(v)) {
            ensure_grad(v);
            Tensor& gv = nodes_[v].grad;
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < g.cols; ++c) gv.data[c] += g.at(r, c);
        }
    };
    return id;
}

NodeId Tape::gather_rows(NodeId table, const std::vector<int>& ids) {
    const Tensor& T = val(table);
    for (int i : ids)
        if (i < 0 || std::size_t(i) >= T.rows)
            throw IndexError("gather_rows: id " + std::to_string(i) + " out of table range");
    Tensor out(ids.size(), T.cols);
    for (std::size_t n = 0; n < ids.size(); ++n)
        std::copy(T.data.begin() + ids[n] * T.cols, T.data.begin() + (ids[n] + 1) * T.cols,
                  out.data.begin() + n * T.cols);
    NodeId id = push(std::move(out), wants(table), nullptr);
    std::vector<int> idv = ids;
    nodes_[id].back = [this, id, table, idv] {
        if (!wants(table)) return;
        ensure_grad(table);
        const Tensor& g = nodes_[id].grad;
        Tensor& gt = nodes_[table].grad;
        for (std::size_t n = 0; n < idv.size(); ++n)
            for (std::size_t c = 0; c < g.cols; ++c) gt.at(idv[n], c) += g.at(n, c);
    };
    return id;
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& X = val(x);
    const Tensor& G = val(gain);
    const Tensor& B = val(bias);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw ShapeError("layer_norm: gain/bias shape mismatch");
    std::size_t N = X.rows, D = X.cols;
    Tensor out(N, D);
    for (std::size_t r = 0; r < N; ++r) {
        double mu = 0;
        for (std::size_t c = 0; c < D; ++c) mu += X.at(r, c);
        mu /= double(D);
        double var = 0;
        for (std::size_t c = 0; c < D; ++c) {
            double d = X.at(r, c) - mu;
            var += d * d;
        }
        var /= double(D);
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < D; ++c)
            out.at(r, c) = (X.at(r, c) - mu) * inv * G.data[c] + B.data[c];
    }
    NodeId id = push(std::move(out), wants(x) || wants(gain) || wants(bias), nullptr);
    nodes_[id].back = [this, id, x, gain, bias, eps] {
        const Tensor& g = nodes_[id].grad;
        const Tensor& X = nodes_[x].value;
        const Tensor& G = nodes_[gain].value;
        std::size_t N = X.rows, D = X.cols;
        if (wants(x)) ensure_grad(x);
        if (wants(gain)) ensure_grad(gain);
        if (wants(bias)) ensure_grad(bias);
        for (std::size_t r = 0; r < N; ++r) {
            double mu = 0;
            for (std::size_t c = 0; c < D; ++c) mu += X.at(r, c);
            mu /= double(D);
            double var = 0;
            for (std::size_t c = 0; c < D; ++c) {
                double d = X.at(r, c) - mu;
                var += d * d;
            }
            var /= double(D);
            double inv = 1.0 / std::sqrt(var + eps);
            // xhat_c = (x_c - mu) * inv
            double sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (std::size_t c = 0; c < D; ++c) {
                double xhat = (X.at(r, c) - mu) * inv;
                double dxhat = g.at(r, c) * G.data[c];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
                if (wants(gain)) nodes_[gain].grad.data[c] += g.at(r, c) * xhat;
                if (wants(bias)) nodes_[bias].grad.data[c] += g.at(r, c);
            }
            if (wants(x)) {
                for (std::size_t c = 0; c < D; ++c) {
                    double xhat = (X.at(r, c) - mu) * inv;
                    double dxhat = g.at(r, c) * G.data[c];
                    nodes_[x].grad.at(r, c) +=
                        inv * (dxhat - sum_dxhat / double(D) - xhat * sum_dxhat_xhat / double(D));
                }
            }
        }
    };
    return id;
}

NodeId Tape::rotary(NodeId x, double base) {
    const Tensor& X = val(x);
    if (X.cols % 2 != 0) throw ConfigError("rotary: feature dimension must be even");
    std::size_t N = X.rows, D = X.cols, H = D / 2;
    Tensor out(N, D);
    for (std::size_t m = 0; m < N; ++m) {
        for (std::size_t j = 0; j < H; ++j) {
            double theta = double(m) * std::pow(base, -2.0 * double(j) / double(D));
            double cs = std::cos(theta), sn = std::sin(theta);
            double a = X.at(m, 2 * j), b = X.at(m, 2 * j + 1);
            out.at(m, 2 * j) = a * cs - b * sn;
            out.at(m, 2 * j + 1) = a * sn + b * cs;
        }
    }
    NodeId id = push(std::move(out), wants(x), nullptr);
    nodes_[id].back = [this, id, x, base] {
        if (!wants(x)) return;
        ensure_grad(x);
        const Tensor& g = nodes_[id].grad;
        Tensor& gx = nodes_[x].grad;
        std::size_t N = g.rows, D = g.cols, H = D / 2;
        for (std::size_t m = 0; m < N; ++m) {
            for (std::size_t j = 0; j < H; ++j) {
                double theta = double(m) * std::pow(base, -2.0 * double(j) / double(D));
                double cs = std::cos(theta), sn = std::sin(theta);
                double ga = g.at(m, 2 * j), gb = g.at(m, 2 * j + 1);
                gx.at(m, 2 * j) += ga * cs + gb * sn;
                gx.at(m, 2 * j + 1) += -ga * sn + gb * cs;
            }
        }
    };
    return id;
}

NodeId Tape::masked_softmax_rows(NodeId scores, const Tensor& allow) {
    const Tensor& S = val(scores);
    if (!S.same_shape(allow)) throw ShapeError("masked_softmax_rows: mask shape mismatch");
    Tensor out(S.rows, S.cols);
    for (std::size_t r = 0; r < S.rows; ++r) {
        double mx = -1e300;
        bool any = false;
        for (std::size_t c = 0; c < S.cols; ++c)
            if (allow.at(r, c) != 0.0) {
                any = true;
                mx = std::max(mx, S.at(r, c));
            }
        if (!any) continue; // fully-masked row stays zero
        double z = 0;
        for (std::size_t c = 0; c < S.cols; ++c) {
            if (allow.at(r, c) != 0.0) {
                out.at(r, c) = std::exp(S.at(r, c) - mx);
                z += out.at(r, c);
            }
        }
        for (std::size_t c = 0; c < S.cols; ++c) out.at(r, c) /= z;
    }
    NodeId id = push(std::move(out), wants(scores), nullptr);
    nodes_[id].back = [this, id, scores] {
        if (!wants(scores)) return;
        ensure_grad(scores);
        const Tensor& g = nodes_[id].grad;
        const Tensor& y = nodes_[id].value;
        Tensor& gs = nodes_[scores].grad;
        for (std::size_t r = 0; r < g.rows; ++r) {
            double dot = 0;
            for (std::size_t c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (std::size_t c = 0; c < g.cols; ++c)
                gs.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
    };
    return id;
}

NodeId Tape::sum_all(NodeId a) {
    const Tensor& A = val(a);
    double s = 0;
    for (double x : A.data) s += x;
    NodeId id = push(Tensor::scalar(s), wants(a), nullptr);
    nodes_[id].back = [this, id, a] {
        if (!wants(a)) return;
        ensure_grad(a);
        double g = nodes_[id].grad.item();
        for (double& x : nodes_[a].grad.data) x += g;
    };
    return id;
}

NodeId Tape::mean_all(NodeId a) { return scale(sum_all(a), 1.0 / double(val(a).numel())); }

NodeId Tape::cross_entropy(NodeId logits, const std::vector<int>& targets, int ignore_id) {
    const Tensor& L = val(logits);
    if (targets.size() != L.rows) throw ShapeError("cross_entropy: target count mismatch");
    std::size_t counted = 0;
    double loss = 0;
    for (std::size_t r = 0; r < L.rows; ++r) {
        int t = targets[r];
        if (t == ignore_id) continue;
        if (t < 0 || std::size_t(t) >= L.cols)
            throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range");
        double mx = L.at(r, 0);
        for (std::size_t c = 1; c < L.cols; ++c) mx = std::max(mx, L.at(r, c));
        double z = 0;
        for (std::size_t c = 0; c < L.cols; ++c) z += std::exp(L.at(r, c) - mx);
        loss += std::log(z) + mx - L.at(r, t);
        ++counted;
    }
    if (counted == 0) throw DegenerateBatch("cross_entropy: every position ignored");
    loss /= double(counted);
    NodeId id = push(Tensor::scalar(loss), wants(logits), nullptr);
    std::vector<int> tv = targets;
    nodes_[id].back = [this, id, logits, tv, ignore_id, counted] {
        if (!wants(logits)) return;
        ensure_grad(logits);
        double g = nodes_[id].grad.item() / double(counted);
        const Tensor& L = nodes_[logits].value;
        Tensor& gl = nodes_[logits].grad;
        for (std::size_t r = 0; r < L.rows; ++r) {
            int t = tv[r];
            if (t == ignore_id) continue;
            double mx = L.at(r, 0);
            for (std::size_t c = 1; c < L.cols; ++c) mx = std::max(mx, L.at(r, c));
            double z = 0;
            for (std::size_t c = 0; c < L.cols; ++c) z += std::exp(L.at(r, c) - mx);
            for (std::size_t c = 0; c < L.cols; ++c) {
                double p = std::exp(L.at(r, c) - mx) / z;
                gl.at(r, c) += g * (p - (int(c) == t ? 1.0 : 0.0));
            }
        }
    };
    return id;
}

NodeId Tape::kl_gaussian(NodeId mean, NodeId logvar) {
    const Tensor& M = val(mean);
    const Tensor& V = val(logvar);
    if (!M.same_shape(V)) throw ShapeError("kl_gaussian: shape mismatch");
    double kl = 0;
    for (std::size_t i = 0; i < M.data.size(); ++i) {
        double mu = M.data[i], lv = V.data[i];
        kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    kl /= double(M.rows);
    NodeId id = push(Tensor::scalar(kl), wants(mean) || wants(logvar), nullptr);
    nodes_[id].back = [this, id, mean, logvar] {
        double g = nodes_[id].grad.item() / double(nodes_[mean].value.rows);
        const Tensor& M = nodes_[mean].value;
        const Tensor& V = nodes_[logvar].value;
        if (wants(mean)) {
            ensure_grad(mean);
            for (std::size_t i = 0; i < M.data.size(); ++i)
                nodes_[mean].grad.data[i] += g * M.data[i];
        }
        if (wants(logvar)) {
            ensure_grad(logvar);
            for (std::size_t i = 0; i < V.data.size(); ++i)
                nodes_[logvar].grad.data[i] += g * 0.5 * (std::exp(V.data[i]) - 1.0);
        }
    };
    return id;
}

void Tape::backward(NodeId root) {
    if (val(root).numel() != 1) throw ShapeError("backward: root must be a scalar");
    ensure_grad(root);
    nodes_[root].grad.data[0] = 1.0;
    for (NodeId i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || !n.back) continue;
        if (n.grad.numel() == 0) continue; // never reached from the root
        n.back();
    }
}

} // namespace scoreperf
