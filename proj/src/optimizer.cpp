#include "scoreperf/optimizer.hpp"

#include <cmath>

#include "scoreperf/errors.hpp"

namespace scoreperf {

double lr_schedule(long long step, long long warmup, long long total, double peak) {
    if (total < 1) throw ConfigError("lr_schedule: total steps must be >= 1");
    if (warmup < 0 || warmup > total) throw ConfigError("lr_schedule: warmup outside [0, total]");
    if (step <= 0) return 0.0;
    if (step > total) return 0.0;
    if (warmup > 0 && step <= warmup) return peak * double(step) / double(warmup);
    if (total == warmup) return peak;
    double frac = double(step - warmup) / double(total - warmup);
    return peak * 0.5 * (1.0 + std::cos(M_PI * frac));
}

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1, double(t_));
    double bc2 = 1.0 - std::pow(beta2, double(t_));
    for (const auto& [name, g] : grads) {
        Tensor& p = params.at(name);
        if (!p.same_shape(g)) throw ShapeError("AdamW: gradient shape mismatch for " + name);
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            m_.emplace(name, Tensor::zeros(p.rows, p.cols));
            v_.emplace(name, Tensor::zeros(p.rows, p.cols));
        }
        Tensor& m = m_[name];
        Tensor& v = v_[name];
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g.data[i];
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g.data[i] * g.data[i];
            double mhat = m.data[i] / bc1;
            double vhat = v.data[i] / bc2;
            p.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.data[i]);
        }
    }
}

void ema_update(ParamStore& shadow, const ParamStore& current,
                const std::vector<std::string>& names, double decay) {
    if (decay < 0.0 || decay >= 1.0) throw DomainError("ema_update: decay outside [0,1)");
    for (const std::string& name : names) {
        const Tensor& cur = current.at(name);
        if (!shadow.has(name)) {
            shadow.set(name, cur);
            continue;
        }
        Tensor& sh = shadow.at(name);
        if (!sh.same_shape(cur)) throw ShapeError("ema_update: shape mismatch for " + name);
        for (std::size_t i = 0; i < sh.data.size(); ++i)
            sh.data[i] = decay * sh.data[i] + (1.0 - decay) * cur.data[i];
    }
}

} // namespace scoreperf
