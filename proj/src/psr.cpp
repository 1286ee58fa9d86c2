#include "scoreperf/psr.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "scoreperf/errors.hpp"
#include "scoreperf/notes_io.hpp"

namespace scoreperf {

DiffusionSchedule::DiffusionSchedule(int steps, double beta_lo, double beta_hi)
    : steps_(steps), beta_lo_(beta_lo), beta_hi_(beta_hi) {
    if (steps < 1) throw ConfigError("diffusion schedule: steps must be >= 1");
    betas_.resize(steps);
    alpha_bars_.assign(steps + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
        double f = steps == 1 ? 0.0 : double(t - 1) / double(steps - 1);
        double b = beta_lo + (beta_hi - beta_lo) * f;
        if (!(b > 0.0 && b < 1.0))
            throw ConfigError("diffusion schedule: beta outside (0, 1) at step " +
                              std::to_string(t));
        betas_[t - 1] = b;
        alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - b);
        if (!(alpha_bars_[t] < alpha_bars_[t - 1]))
            throw ConfigError("diffusion schedule: alpha_bar not strictly decreasing");
    }
}

double DiffusionSchedule::beta(int t) const {
    if (t < 1 || t > steps_) throw DomainError("diffusion schedule: step out of range");
    return betas_[t - 1];
}

double DiffusionSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps_) throw DomainError("diffusion schedule: step out of range");
    return alpha_bars_[t];
}

namespace {

void check_noise_args(const Tensor& a, const Tensor& b, int t, const DiffusionSchedule& s) {
    if (t < 1 || t > s.steps()) throw DomainError("diffusion: step out of range");
    if (!a.same_shape(b)) throw ShapeError("diffusion: operand shapes differ");
}

Tensor axpby(double ca, const Tensor& a, double cb, const Tensor& b) {
    Tensor out(a.rows, a.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = ca * a.data[i] + cb * b.data[i];
    return out;
}

} // namespace

Tensor forward_noise(const Tensor& z, int t, const Tensor& eps, const DiffusionSchedule& s) {
    check_noise_args(z, eps, t, s);
    double ab = s.alpha_bar(t);
    return axpby(std::sqrt(ab), z, std::sqrt(1.0 - ab), eps);
}

Tensor v_target(const Tensor& z, const Tensor& eps, int t, const DiffusionSchedule& s) {
    check_noise_args(z, eps, t, s);
    double ab = s.alpha_bar(t);
    return axpby(std::sqrt(ab), eps, -std::sqrt(1.0 - ab), z);
}

Tensor recover_z(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s) {
    check_noise_args(z_t, v, t, s);
    double ab = s.alpha_bar(t);
    return axpby(std::sqrt(ab), z_t, -std::sqrt(1.0 - ab), v);
}

Tensor recover_eps(const Tensor& z_t, const Tensor& v, int t, const DiffusionSchedule& s) {
    check_noise_args(z_t, v, t, s);
    double ab = s.alpha_bar(t);
    return axpby(std::sqrt(1.0 - ab), z_t, std::sqrt(ab), v);
}

Tensor timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding: dim must be even");
    Tensor e(1, dim);
    for (int i = 0; i < dim / 2; ++i) {
        double w = std::pow(10000.0, -2.0 * double(i) / double(dim));
        e[2 * i] = std::sin(double(t) * w);
        e[2 * i + 1] = std::cos(double(t) * w);
    }
    return e;
}

PsrModel::PsrModel(PsrConfig cfg, DiffusionSchedule schedule, std::uint64_t init_seed)
    : cfg_(cfg), schedule_(schedule), params_(init_seed), ema_(init_seed) {
    cfg_.tf.validate();
    if (cfg_.style_dim < 1) throw ConfigError("psr: style_dim must be >= 1");
    if (cfg_.hidden < 1) throw ConfigError("psr: hidden must be >= 1");
    if (cfg_.time_embed_dim < 2 || cfg_.time_embed_dim % 2 != 0)
        throw ConfigError("psr: time_embed_dim must be even");
    if (!(cfg_.ema_decay >= 0.0 && cfg_.ema_decay < 1.0))
        throw ConfigError("psr: ema_decay outside [0, 1)");
}

NodeId PsrModel::encode_score(Bind& bind, const TokenSequence& score_in) const {
    if (score_in.layout != TokenLayout::score_input)
        throw ShapeError("psr encode: wrong token layout");
    if (score_in.note_count() == 0) throw EmptySequence("psr encode: empty score");
    Tape& t = bind.tape();
    const TokenizerManifest& m = default_manifest();
    NodeId x = embed_notes(bind, "psr.embed", score_in.streams, m.score_input,
                           cfg_.tf.model_dim, 1);
    NodeId cls = bind("psr.gx.cls", 1, std::size_t(cfg_.tf.model_dim), Init::normal);
    NodeId seq = t.concat_rows({cls, x});
    std::size_t n = t.val(seq).rows;
    NodeId h = encoder_forward(bind, "psr.gx", seq, full_mask(n, n), cfg_.tf);
    NodeId head = t.slice_rows(h, 0, 1);
    NodeId proj = bind("psr.proj", std::size_t(cfg_.tf.model_dim), std::size_t(cfg_.style_dim),
                       Init::normal);
    return t.matmul(head, proj);
}

NodeId PsrModel::denoise(Bind& bind, NodeId cond, int t, NodeId z_t) const {
    Tape& tp = bind.tape();
    NodeId e_t = tp.constant(timestep_embedding(t, cfg_.time_embed_dim));
    NodeId x = tp.concat_cols({cond, e_t, z_t});
    std::size_t in = 2 * std::size_t(cfg_.style_dim) + std::size_t(cfg_.time_embed_dim);
    std::size_t h = std::size_t(cfg_.hidden);
    std::size_t d = std::size_t(cfg_.style_dim);

    NodeId w1 = bind("psr.mlp.w1", in, h, Init::normal);
    NodeId b1 = bind("psr.mlp.b1", 1, h, Init::zeros);
    NodeId a1 = tp.swish(tp.add_rowvec(tp.matmul(x, w1), b1));
    NodeId w2 = bind("psr.mlp.w2", h, h, Init::normal);
    NodeId b2 = bind("psr.mlp.b2", 1, h, Init::zeros);
    NodeId a2 = tp.swish(tp.add_rowvec(tp.matmul(a1, w2), b2));
    NodeId w3 = bind("psr.mlp.w3", h, d, Init::zeros);
    NodeId b3 = bind("psr.mlp.b3", 1, d, Init::zeros);
    return tp.add_rowvec(tp.matmul(a2, w3), b3);
}

NodeId PsrModel::loss_psr(Bind& bind, const PsrExample& ex, Rng& rng) const {
    if (ex.style.rows != 1 || int(ex.style.cols) != cfg_.style_dim)
        throw ShapeError("psr loss: style vector dimension mismatch");
    Tape& tp = bind.tape();
    int t = int(rng.range(1, schedule_.steps()));
    Tensor eps(1, cfg_.style_dim);
    for (double& x : eps.data) x = rng.normal();
    Tensor z_t = forward_noise(ex.style, t, eps, schedule_);
    Tensor target = cfg_.predict_noise ? eps : v_target(ex.style, eps, t, schedule_);

    NodeId cond = encode_score(bind, ex.score_in);
    NodeId pred = denoise(bind, cond, t, tp.constant(z_t));
    NodeId diff = tp.sub(pred, tp.constant(target));
    return tp.mean_all(tp.mul(diff, diff));
}

std::vector<std::string> PsrModel::denoiser_names() const {
    std::vector<std::string> out;
    for (const std::string& name : params_.names())
        if (name.rfind("psr.mlp.", 0) == 0) out.push_back(name);
    return out;
}

namespace {

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

double PsrModel::train(const std::vector<PsrExample>& data, const PsrTrainOptions& opt) {
    if (data.empty()) throw ConfigError("psr train: dataset is empty");
    if (opt.steps < 1) throw ConfigError("psr train: steps must be >= 1");
    if (opt.batch < 1) throw ConfigError("psr train: batch must be >= 1");
    for (const PsrExample& ex : data) {
        if (int(ex.score_in.note_count()) > cfg_.max_notes)
            throw ConfigError("psr train: score exceeds the " +
                              std::to_string(cfg_.max_notes) + "-note limit");
        if (ex.style.rows != 1 || int(ex.style.cols) != cfg_.style_dim)
            throw ShapeError("psr train: style vector dimension mismatch");
    }

    std::ofstream csv;
    if (!opt.loss_csv.empty()) {
        bool fresh = !std::ifstream(opt.loss_csv).good();
        csv.open(opt.loss_csv, std::ios::app);
        if (!csv) throw IoError("cannot write " + opt.loss_csv);
        if (fresh) csv << "step,lr,loss\n";
    }

    Rng master(opt.seed);
    Cycler cycle(data.size(), master.fork());
    AdamW adamw;
    double last = 0.0;
    for (long long step = 1; step <= opt.steps; ++step) {
        Tape tape;
        Bind bind(tape, params_);
        NodeId sum = -1;
        for (int i = 0; i < opt.batch; ++i) {
            NodeId l = loss_psr(bind, data[cycle.next()], master);
            sum = sum < 0 ? l : tape.add(sum, l);
        }
        NodeId loss = opt.batch == 1 ? sum : tape.scale(sum, 1.0 / double(opt.batch));
        last = tape.val(loss).item();
        if (!std::isfinite(last))
            throw StateError("psr train: non-finite loss at step " + std::to_string(step));
        tape.backward(loss);

        std::map<std::string, Tensor> grads;
        for (const auto& [name, id] : bind.bound()) {
            const Tensor& g = tape.grad(id);
            if (g.numel() > 0) grads.emplace(name, g);
        }
        double lr = lr_schedule(step, opt.warmup, opt.steps, opt.peak_lr);
        adamw.step(params_, grads, lr);
        ema_update(ema_, params_, denoiser_names(), cfg_.ema_decay);
        ++trained_steps_;

        if (csv.is_open())
            csv << step << ',' << format_double(lr) << ',' << format_double(last) << '\n';
        if (opt.stop_when_below > 0 && last < opt.stop_when_below) break;
    }
    return last;
}

Tensor PsrModel::sample_style(const TokenSequence& score_in, const SampleOptions& opt) {
    if (trained_steps_ == 0 || !ema_.has("psr.mlp.w1"))
        throw StateError("psr sample: model has not been trained");

    Tensor cond;
    {
        Tape tape;
        Bind bind(tape, params_, false);
        cond = tape.val(encode_score(bind, score_in));
    }

    Rng rng(opt.seed);
    Tensor z(1, cfg_.style_dim);
    for (double& x : z.data) x = rng.normal();

    for (int t = schedule_.steps(); t >= 1; --t) {
        Tape tape;
        Bind bema(tape, ema_, false);
        NodeId pred = denoise(bema, tape.constant(cond), t, tape.constant(z));
        const Tensor& out = tape.val(pred);

        double ab = schedule_.alpha_bar(t);
        Tensor z0, eps_hat;
        if (cfg_.predict_noise) {
            eps_hat = out;
            z0 = axpby(1.0 / std::sqrt(ab), z, -std::sqrt(1.0 - ab) / std::sqrt(ab), eps_hat);
        } else {
            z0 = recover_z(z, out, t, schedule_);
            eps_hat = recover_eps(z, out, t, schedule_);
        }

        double ab_prev = schedule_.alpha_bar(t - 1);
        if (opt.ddim) {
            z = axpby(std::sqrt(ab_prev), z0, std::sqrt(1.0 - ab_prev), eps_hat);
        } else {
            double beta = schedule_.beta(t);
            double alpha = schedule_.alpha(t);
            double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
            double ct = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
            Tensor mean = axpby(c0, z0, ct, z);
            if (t > 1) {
                double var = (1.0 - ab_prev) / (1.0 - ab) * beta;
                double sd = std::sqrt(var);
                for (double& x : mean.data) x += sd * rng.normal();
            }
            z = mean;
        }
    }
    return z;
}

void PsrModel::save(const std::string& path) const {
    ParamStore snapshot(params_.seed());
    for (const std::string& name : params_.names()) snapshot.set(name, params_.at(name));
    for (const std::string& name : denoiser_names())
        if (ema_.has(name)) snapshot.set("ema::" + name, ema_.at(name));

    nlohmann::ordered_json meta;
    meta["kind"] = "psr";
    meta["layers"] = cfg_.tf.layers;
    meta["heads"] = cfg_.tf.heads;
    meta["model_dim"] = cfg_.tf.model_dim;
    meta["ffn_hidden"] = cfg_.tf.ffn_hidden;
    meta["style_dim"] = cfg_.style_dim;
    meta["time_embed_dim"] = cfg_.time_embed_dim;
    meta["hidden"] = cfg_.hidden;
    meta["predict_noise"] = cfg_.predict_noise;
    meta["ema_decay"] = cfg_.ema_decay;
    meta["max_notes"] = cfg_.max_notes;
    meta["schedule_steps"] = schedule_.steps();
    meta["beta_lo"] = schedule_.beta_lo();
    meta["beta_hi"] = schedule_.beta_hi();
    meta["trained_steps"] = trained_steps_;
    meta["tokenizer"] = manifest_hash(default_manifest());
    meta["init_seed"] = params_.seed();
    save_checkpoint(path, snapshot, meta.dump());
}

PsrModel PsrModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.meta_json);
    } catch (const std::exception& e) {
        throw ParseError(std::string("checkpoint meta: ") + e.what());
    }
    if (meta.value("kind", "") != "psr")
        throw StateError("checkpoint at " + path + " is not a style recommender");
    std::string expected = manifest_hash(default_manifest());
    std::string have = meta.value("tokenizer", "");
    if (have != expected)
        throw StateError("checkpoint tokenizer manifest " + have +
                         " does not match this build's tokenizer (" + expected + ")");

    PsrConfig cfg;
    cfg.tf.layers = meta.value("layers", cfg.tf.layers);
    cfg.tf.heads = meta.value("heads", cfg.tf.heads);
    cfg.tf.model_dim = meta.value("model_dim", cfg.tf.model_dim);
    cfg.tf.ffn_hidden = meta.value("ffn_hidden", cfg.tf.ffn_hidden);
    cfg.style_dim = meta.value("style_dim", cfg.style_dim);
    cfg.time_embed_dim = meta.value("time_embed_dim", cfg.time_embed_dim);
    cfg.hidden = meta.value("hidden", cfg.hidden);
    cfg.predict_noise = meta.value("predict_noise", cfg.predict_noise);
    cfg.ema_decay = meta.value("ema_decay", cfg.ema_decay);
    cfg.max_notes = meta.value("max_notes", cfg.max_notes);
    DiffusionSchedule schedule(meta.value("schedule_steps", 1000), meta.value("beta_lo", 1e-4),
                               meta.value("beta_hi", 0.02));

    PsrModel model(cfg, schedule, meta.value("init_seed", std::uint64_t(0x5eedf00dULL)));
    for (const auto& [name, tensor] : ck.entries) {
        if (name.rfind("ema::", 0) == 0)
            model.ema_.set(name.substr(5), tensor);
        else
            model.params_.set(name, tensor);
    }
    model.trained_steps_ = meta.value("trained_steps", 0LL);
    return model;
}

void save_style_vector(const std::string& path, const Tensor& style,
                       const std::string& ckpt_hash) {
    if (style.rows != 1 || style.cols == 0)
        throw ShapeError("style vector must be a non-empty row");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << "scoreperf-style v1 dim=" << style.cols << " ckpt=" << ckpt_hash << "\n";
    os.write(reinterpret_cast<const char*>(style.data.data()),
             std::streamsize(style.data.size() * sizeof(double)));
    if (!os) throw IoError("short write to " + path);
}

StyleFile load_style_vector(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path);
    std::string header;
    if (!std::getline(is, header)) throw ParseError("style file: missing header");
    std::istringstream hs(header);
    std::string magic, version, dim_kv, ckpt_kv;
    hs >> magic >> version >> dim_kv >> ckpt_kv;
    if (magic != "scoreperf-style" || version != "v1" || dim_kv.rfind("dim=", 0) != 0 ||
        ckpt_kv.rfind("ckpt=", 0) != 0)
        throw ParseError("style file: bad header '" + header + "'");
    std::size_t dim = 0;
    try {
        dim = std::stoul(dim_kv.substr(4));
    } catch (const std::exception&) {
        throw ParseError("style file: bad dimension in header");
    }
    if (dim == 0) throw ParseError("style file: zero dimension");

    StyleFile out;
    out.ckpt_hash = ckpt_kv.substr(5);
    out.style = Tensor(1, dim);
    is.read(reinterpret_cast<char*>(out.style.data.data()),
            std::streamsize(dim * sizeof(double)));
    if (std::size_t(is.gcount()) != dim * sizeof(double))
        throw ParseError("style file: truncated data block");
    return out;
}

} // namespace scoreperf
