#pragma once

#include <map>
#include <string>

#include "scoreperf/nn.hpp"

namespace scoreperf {

// Linear warmup to `peak` at t = warmup, then cosine decay reaching exactly 0
// at t = total. Steps are 1-based.
double lr_schedule(long long step, long long warmup, long long total, double peak);

// Decoupled weight decay; moments keyed by parameter name.
class AdamW {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr);
    long long steps_taken() const { return t_; }

private:
    long long t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

// shadow <- decay * shadow + (1 - decay) * current, for every name in
// `names`; missing shadow entries start as copies of current.
void ema_update(ParamStore& shadow, const ParamStore& current,
                const std::vector<std::string>& names, double decay);

} // namespace scoreperf
