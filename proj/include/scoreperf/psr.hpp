#pragma once

#include <string>
#include <vector>

#include "scoreperf/checkpoint.hpp"
#include "scoreperf/nn.hpp"
#include "scoreperf/optimizer.hpp"
#include "scoreperf/tokenize.hpp"

namespace scoreperf {

// Linear-beta noise schedule; betas in (0, 1), alpha_bar strictly decreasing.
class DiffusionSchedule {
public:
    DiffusionSchedule(int steps = 1000, double beta_lo = 1e-4, double beta_hi = 0.02);

    int steps() const { return steps_; }
    double beta_lo() const { return beta_lo_; }
    double beta_hi() const { return beta_hi_; }
    double beta(int t) const;      // 1 <= t <= steps
    double alpha(int t) const { return 1.0 - beta(t); }
    double alpha_bar(int t) const; // alpha_bar(0) == 1 by convention

private:
    int steps_;
    double beta_lo_, beta_hi_;
    std::vector<double> betas_;
    std::vector<double> alpha_bars_;
};

// z^t = sqrt(abar_t) z + sqrt(1 - abar_t) eps.
Tensor forward_noise(const Tensor& z, int t, const Tensor& eps, const DiffusionSchedule& s);

// v = sqrt(abar_t) eps - sqrt(1 - abar_t) z.
Tensor v_target(const Tensor& z, const Tensor& eps, int t, const DiffusionSchedule& s);

// Inverse of the (z, eps) -> (z^t, v) rotation.
Tensor recover_z(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s);
Tensor recover_eps(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s);

// Classic sin/cos embedding; even columns sin(t * w_j), odd offset cos.
Tensor timestep_embedding(int t, int dim);

struct PsrConfig {
    TransformerConfig tf{2, 8, 128, 256}; // global score encoder
    int style_dim = 128;                  // dimension of the vectors being modeled
    int time_embed_dim = 128;
    int hidden = 1024;                    // denoiser MLP width
    bool predict_noise = false;           // regress eps instead of velocity
    double ema_decay = 0.999;
    int max_notes = 256;
};

struct PsrExample {
    TokenSequence score_in; // score_input layout
    Tensor style;           // [1, style_dim], from the frozen joint model
};

struct PsrTrainOptions {
    long long steps = 500;
    long long warmup = 50;
    double peak_lr = 1e-4;
    int batch = 4;
    std::uint64_t seed = 1;
    std::string loss_csv;
    double stop_when_below = 0;
};

struct SampleOptions {
    std::uint64_t seed = 1;
    bool ddim = false; // deterministic update instead of ancestral noise
};

// Score-conditioned diffusion over style vectors: a CLS-token score encoder
// supplies the conditioning embedding; an MLP denoiser is trained on noised
// style vectors and sampled with its EMA weights.
class PsrModel {
public:
    explicit PsrModel(PsrConfig cfg = {}, DiffusionSchedule schedule = DiffusionSchedule(),
                      std::uint64_t init_seed = 0x5eedf00dULL);

    const PsrConfig& config() const { return cfg_; }
    const DiffusionSchedule& schedule() const { return schedule_; }
    ParamStore& params() { return params_; }
    long long trained_steps() const { return trained_steps_; }

    // e_g' — projected CLS state of the global score encoder; [1, style_dim].
    NodeId encode_score(Bind& bind, const TokenSequence& score_in) const;

    // Denoiser output for (cond, e_t, z^t); parameters come from bind's store.
    NodeId denoise(Bind& bind, NodeId cond, int t, NodeId z_t) const;

    // Single-example regression loss against the velocity (or noise) target.
    NodeId loss_psr(Bind& bind, const PsrExample& ex, Rng& rng) const;

    double train(const std::vector<PsrExample>& data, const PsrTrainOptions& opt);

    // Ancestral (or DDIM) sampling from the prior with the EMA denoiser.
    Tensor sample_style(const TokenSequence& score_in, const SampleOptions& opt = {});

    void save(const std::string& path) const;
    static PsrModel load(const std::string& path);

private:
    std::vector<std::string> denoiser_names() const;

    PsrConfig cfg_;
    DiffusionSchedule schedule_;
    ParamStore params_;
    ParamStore ema_;
    long long trained_steps_ = 0;
};

// Style-vector files: "scoreperf-style v1 dim=<D> ckpt=<hash>" then raw
// little-endian float64 values.
void save_style_vector(const std::string& path, const Tensor& style,
                       const std::string& ckpt_hash);
struct StyleFile {
    Tensor style;
    std::string ckpt_hash;
};
StyleFile load_style_vector(const std::string& path);

} // namespace scoreperf
