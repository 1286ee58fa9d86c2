#include "scoreperf/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "scoreperf/errors.hpp"
#include "scoreperf/notes_io.hpp"
#include "scoreperf/optimizer.hpp"
#include "scoreperf/rng.hpp"

namespace scoreperf {

Probe::Probe(int bottleneck_dim, std::uint64_t seed)
    : bottleneck_(bottleneck_dim), seed_(seed), params_(seed) {
    if (bottleneck_dim < 0) throw ConfigError("probe: bottleneck_dim must be >= 0");
}

namespace {

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
    Tensor out(rows.size(), x.cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < x.cols; ++c) out.at(r, c) = x.at(rows[r], c);
    return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        int best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (logits.at(r, c) > logits.at(r, best)) best = int(c);
        out[r] = best;
    }
    return out;
}

double fraction_equal(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] == b[i]) ++hits;
    return a.empty() ? 0.0 : double(hits) / double(a.size());
}

} // namespace

ProbeResult Probe::fit(const Tensor& vectors, const std::vector<int>& labels) {
    if (vectors.rows != labels.size()) throw ShapeError("probe: one label per vector required");
    if (vectors.rows < 2) throw DegenerateStatistics("probe: need at least 2 vectors");

    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw DegenerateLabels("probe: need at least 2 classes");
    classes_.assign(distinct.begin(), distinct.end());
    std::map<int, int> to_class;
    for (std::size_t c = 0; c < classes_.size(); ++c) to_class[classes_[c]] = int(c);

    // Stratified 80/20 split, seeded; singleton classes train-only.
    Rng rng(seed_);
    std::vector<std::size_t> train_idx, test_idx;
    for (int cls : classes_) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cls) rows.push_back(i);
        for (std::size_t i = rows.size(); i > 1; --i)
            std::swap(rows[i - 1], rows[rng.below(i)]);
        std::size_t n_test = rows.size() / 5;
        if (n_test == 0 && rows.size() > 1) n_test = 1;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < rows.size() - n_test ? train_idx : test_idx).push_back(rows[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Tensor x_train = take_rows(vectors, train_idx);
    std::vector<int> y_train;
    for (std::size_t i : train_idx) y_train.push_back(to_class[labels[i]]);

    std::size_t D = vectors.cols, C = classes_.size();
    AdamW adamw;
    adamw.weight_decay = 0.0;
    for (int epoch = 0; epoch < kEpochs; ++epoch) {
        Tape tape;
        Bind bind(tape, params_);
        NodeId x = tape.constant(x_train);
        NodeId out;
        if (bottleneck_ > 0) {
            NodeId w1 = bind("probe.w1", D, std::size_t(bottleneck_), Init::normal);
            NodeId b1 = bind("probe.b1", 1, std::size_t(bottleneck_), Init::zeros);
            NodeId h = tape.add_rowvec(tape.matmul(x, w1), b1);
            NodeId w2 = bind("probe.w2", std::size_t(bottleneck_), C, Init::normal);
            NodeId b2 = bind("probe.b2", 1, C, Init::zeros);
            out = tape.add_rowvec(tape.matmul(h, w2), b2);
        } else {
            NodeId w = bind("probe.w", D, C, Init::zeros);
            NodeId b = bind("probe.b", 1, C, Init::zeros);
            out = tape.add_rowvec(tape.matmul(x, w), b);
        }
        NodeId loss = tape.cross_entropy(out, y_train);
        tape.backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : bind.bound()) grads.emplace(name, tape.grad(id));
        adamw.step(params_, grads, kLearningRate);
    }
    trained_ = true;

    ProbeResult res;
    std::vector<int> train_pred = predict(take_rows(vectors, train_idx));
    std::vector<int> train_true;
    for (std::size_t i : train_idx) train_true.push_back(labels[i]);
    res.train_accuracy = fraction_equal(train_pred, train_true) * 100.0;

    std::vector<int> test_pred = predict(take_rows(vectors, test_idx));
    std::vector<int> test_true;
    for (std::size_t i : test_idx) test_true.push_back(labels[i]);
    res.accuracy = fraction_equal(test_pred, test_true) * 100.0;

    double prec = 0, rec = 0, f1 = 0;
    for (int cls : classes_) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < test_true.size(); ++i) {
            if (test_pred[i] == cls && test_true[i] == cls) ++tp;
            if (test_pred[i] == cls && test_true[i] != cls) ++fp;
            if (test_pred[i] != cls && test_true[i] == cls) ++fn;
        }
        double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
        double r = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
        prec += p;
        rec += r;
        f1 += p + r == 0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    res.precision = prec / double(classes_.size()) * 100.0;
    res.recall = rec / double(classes_.size()) * 100.0;
    res.f1 = f1 / double(classes_.size()) * 100.0;
    return res;
}

Tensor Probe::logits(const Tensor& vectors) const {
    if (!trained_) throw StateError("probe: not trained");
    Tape tape;
    NodeId x = tape.constant(vectors);
    NodeId out;
    if (bottleneck_ > 0) {
        NodeId h = tape.add_rowvec(tape.matmul(x, tape.constant(params_.at("probe.w1"))),
                                   tape.constant(params_.at("probe.b1")));
        out = tape.add_rowvec(tape.matmul(h, tape.constant(params_.at("probe.w2"))),
                              tape.constant(params_.at("probe.b2")));
    } else {
        out = tape.add_rowvec(tape.matmul(x, tape.constant(params_.at("probe.w"))),
                              tape.constant(params_.at("probe.b")));
    }
    return tape.val(out);
}

std::vector<int> Probe::predict(const Tensor& vectors) const {
    std::vector<int> idx = argmax_rows(logits(vectors));
    std::vector<int> out;
    out.reserve(idx.size());
    for (int c : idx) out.push_back(classes_[std::size_t(c)]);
    return out;
}

Tensor Probe::bottleneck_coords(const Tensor& vectors) const {
    if (!trained_) throw StateError("probe: not trained");
    if (bottleneck_ <= 0) throw StateError("probe: no bottleneck layer");
    Tape tape;
    NodeId h = tape.add_rowvec(tape.matmul(tape.constant(vectors),
                                           tape.constant(params_.at("probe.w1"))),
                               tape.constant(params_.at("probe.b1")));
    return tape.val(h);
}

LatentMetrics latent_metrics(const Tensor& vectors, const std::vector<int>* labels,
                             int bottleneck_dim) {
    if (vectors.rows < 2) throw DegenerateStatistics("latent_metrics: need at least 2 vectors");
    std::size_t N = vectors.rows, D = vectors.cols;

    LatentMetrics m;
    double kl = 0;
    for (std::size_t d = 0; d < D; ++d) {
        double mean = 0;
        for (std::size_t i = 0; i < N; ++i) mean += vectors.at(i, d);
        mean /= double(N);
        double ss = 0;
        for (std::size_t i = 0; i < N; ++i) {
            double c = vectors.at(i, d) - mean;
            ss += c * c;
        }
        double var = ss / double(N - 1);
        if (var > 0.01) ++m.active_units;
        double v = std::max(var, 1e-12);
        kl += 0.5 * (mean * mean + v - 1.0 - std::log(v));
    }
    m.kl_to_prior = kl / double(D);

    if (labels) {
        Probe probe(bottleneck_dim);
        m.probe = probe.fit(vectors, *labels);
        m.has_probe = true;
    }
    return m;
}

Projection project_2d(const Probe& probe, const Tensor& vectors,
                      const std::vector<int>& labels) {
    if (probe.bottleneck_dim() != 2) throw StateError("project_2d: probe bottleneck must be 2-dim");
    if (vectors.rows != labels.size()) throw ShapeError("project_2d: one label per vector");

    Projection p;
    p.coords = probe.bottleneck_coords(vectors);
    p.labels = labels;
    std::map<int, std::pair<std::pair<double, double>, std::size_t>> acc;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& [sum, count] = acc[labels[i]];
        sum.first += p.coords.at(i, 0);
        sum.second += p.coords.at(i, 1);
        ++count;
    }
    for (const auto& [cls, sc] : acc)
        p.centroids[cls] = {sc.first.first / double(sc.second),
                            sc.first.second / double(sc.second)};
    return p;
}

std::string projection_csv(const Projection& p) {
    std::ostringstream os;
    os << "id,x,y,label\n";
    for (std::size_t i = 0; i < p.coords.rows; ++i)
        os << i << ',' << format_double(p.coords.at(i, 0)) << ','
           << format_double(p.coords.at(i, 1)) << ',' << p.labels[i] << '\n';
    return os.str();
}

} // namespace scoreperf
