#pragma once

#include <map>
#include <string>
#include <vector>

#include "scoreperf/nn.hpp"
#include "scoreperf/tensor.hpp"

namespace scoreperf {

struct ProbeResult {
    double accuracy = 0; // held-out split
    double precision = 0, recall = 0, f1 = 0; // macro over classes
    double train_accuracy = 0;
};

// Multinomial logistic regression over style vectors, trained full-batch for
// a fixed number of epochs on a seeded 80/20 stratified split. An optional
// linear bottleneck (2 dims for plotting) sits before the class logits.
class Probe {
public:
    explicit Probe(int bottleneck_dim = 0, std::uint64_t seed = 7);

    ProbeResult fit(const Tensor& vectors, const std::vector<int>& labels);
    std::vector<int> predict(const Tensor& vectors) const;

    // Bottleneck activations; requires a trained probe with a bottleneck.
    Tensor bottleneck_coords(const Tensor& vectors) const;

    bool trained() const { return trained_; }
    int bottleneck_dim() const { return bottleneck_; }
    ParamStore& params() { return params_; }

    static constexpr int kEpochs = 200;
    static constexpr double kLearningRate = 0.1;

private:
    Tensor logits(const Tensor& vectors) const;

    int bottleneck_;
    std::uint64_t seed_;
    ParamStore params_;
    std::vector<int> classes_; // sorted distinct labels; row index = class id
    bool trained_ = false;
};

struct LatentMetrics {
    int active_units = 0;   // dimensions with sample variance > 0.01
    double kl_to_prior = 0; // per-dimension mean KL of the fitted diagonal
                            // Gaussian against N(0, I)
    bool has_probe = false;
    ProbeResult probe;
};

// vectors: [N, D] with one style vector per row; labels optional.
LatentMetrics latent_metrics(const Tensor& vectors, const std::vector<int>* labels = nullptr,
                             int bottleneck_dim = 0);

struct Projection {
    Tensor coords; // [N, 2]
    std::vector<int> labels;
    std::map<int, std::pair<double, double>> centroids;
};

Projection project_2d(const Probe& probe, const Tensor& vectors,
                      const std::vector<int>& labels);

// "id,x,y,label" rows for external plotting.
std::string projection_csv(const Projection& p);

} // namespace scoreperf
