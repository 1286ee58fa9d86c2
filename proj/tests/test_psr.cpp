#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "scoreperf/errors.hpp"
#include "scoreperf/psr.hpp"
#include "scoreperf/rng.hpp"
#include "scoreperf/tokenize.hpp"

using namespace scoreperf;
using namespace scoreperf::test;

namespace {

PsrConfig tiny_psr_config() {
    PsrConfig cfg;
    cfg.tf = TransformerConfig{1, 2, 16, 32};
    cfg.style_dim = 8;
    cfg.time_embed_dim = 8;
    cfg.hidden = 16;
    cfg.max_notes = 64;
    return cfg;
}

DiffusionSchedule short_schedule() { return DiffusionSchedule(30, 1e-4, 0.05); }

std::vector<PsrExample> tiny_psr_data(int style_dim) {
    std::vector<PsrExample> data;
    Rng rng(41);
    for (int i = 0; i < 3; ++i) {
        PsrExample ex;
        ex.score_in = encode_score_input(tiny_score(4 + i));
        ex.style = Tensor::randn(1, std::size_t(style_dim), rng);
        data.push_back(std::move(ex));
    }
    return data;
}

} // namespace

TEST_CASE("noise schedule is linear with decreasing signal") {
    DiffusionSchedule s;
    CHECK(s.steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(1000) == 0.02);
    CHECK(s.beta(500) ==
          doctest::Approx(1e-4 + (0.02 - 1e-4) * 499.0 / 999.0).epsilon(1e-15));

    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1)); // strictly decreasing
        CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t));
        CHECK(s.beta(t) > 0.0);
        CHECK(s.beta(t) < 1.0);
    }
    CHECK(s.alpha_bar(1000) > 0.0);

    DiffusionSchedule one(1, 0.3, 0.9);
    CHECK(one.beta(1) == 0.3); // single step pins the low end
    CHECK(one.alpha_bar(1) == doctest::Approx(0.7).epsilon(1e-15));

    CHECK_THROWS_AS(s.beta(0), DomainError);
    CHECK_THROWS_AS(s.beta(1001), DomainError);
    CHECK_THROWS_AS(s.alpha_bar(-1), DomainError);
    CHECK_THROWS_AS(s.alpha_bar(1001), DomainError);
    CHECK_THROWS_AS(DiffusionSchedule(0), ConfigError);
    CHECK_THROWS_AS(DiffusionSchedule(10, 0.0, 0.5), ConfigError);
    CHECK_THROWS_AS(DiffusionSchedule(10, 0.1, 1.0), ConfigError);
    CHECK_THROWS_AS(DiffusionSchedule(10, -0.1, 0.5), ConfigError);
}

TEST_CASE("noising and the v parameterization invert exactly") {
    DiffusionSchedule s;
    Rng rng(7);
    Tensor z = Tensor::randn(1, 8, rng);
    Tensor eps = Tensor::randn(1, 8, rng);

    for (int t = 1; t <= s.steps(); ++t) {
        Tensor z_t = forward_noise(z, t, eps, s);
        Tensor v = v_target(z, eps, t, s);
        CHECK(max_abs_diff(recover_z(z_t, v, t, s), z) < 1e-10);
        CHECK(max_abs_diff(recover_eps(z_t, v, t, s), eps) < 1e-10);
    }

    // The map (z, eps) -> (z_t, v) is a rotation: norms are preserved.
    auto sq = [](const Tensor& x) {
        double s2 = 0;
        for (double v : x.data) s2 += v * v;
        return s2;
    };
    Tensor z_t = forward_noise(z, 400, eps, s);
    Tensor v = v_target(z, eps, 400, s);
    CHECK(sq(z_t) + sq(v) == doctest::Approx(sq(z) + sq(eps)).epsilon(1e-12));

    CHECK_THROWS_AS(forward_noise(z, 0, eps, s), DomainError);
    CHECK_THROWS_AS(v_target(z, eps, 1001, s), DomainError);
    CHECK_THROWS_AS(forward_noise(z, 1, Tensor(1, 4), s), ShapeError);
    CHECK_THROWS_AS(recover_z(z_t, Tensor(2, 8), 1, s), ShapeError);
}

TEST_CASE("forward noising preserves mean and variance") {
    DiffusionSchedule s;
    int t = 500;
    double ab = s.alpha_bar(t);

    Tensor z(1, 4);
    z[0] = 1.5;
    z[1] = -0.5;
    z[2] = 0.0;
    z[3] = 2.0;

    const int draws = 5000;
    Rng rng(99);
    Tensor sum(1, 4), sumsq(1, 4);
    for (int i = 0; i < draws; ++i) {
        Tensor eps = Tensor::randn(1, 4, rng);
        Tensor z_t = forward_noise(z, t, eps, s);
        for (int c = 0; c < 4; ++c) {
            sum[c] += z_t[c];
            sumsq[c] += z_t[c] * z_t[c];
        }
    }
    for (int c = 0; c < 4; ++c) {
        double mean = sum[c] / draws;
        double var = (sumsq[c] - draws * mean * mean) / (draws - 1);
        CHECK(std::fabs(mean - std::sqrt(ab) * z[c]) < 0.06);
        CHECK(std::fabs(var - (1.0 - ab)) < 0.05 * (1.0 - ab));
    }
}

TEST_CASE("timestep embedding interleaves sine and cosine") {
    Tensor e0 = timestep_embedding(0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(e0[2 * i] == 0.0);
        CHECK(e0[2 * i + 1] == 1.0);
    }

    Tensor e = timestep_embedding(17, 8);
    for (int i = 0; i < 4; ++i) {
        double w = std::pow(10000.0, -2.0 * i / 8.0);
        CHECK(e[2 * i] == doctest::Approx(std::sin(17 * w)).epsilon(1e-15));
        CHECK(e[2 * i + 1] == doctest::Approx(std::cos(17 * w)).epsilon(1e-15));
        double mag = e[2 * i] * e[2 * i] + e[2 * i + 1] * e[2 * i + 1];
        CHECK(mag == doctest::Approx(1.0).epsilon(1e-12));
    }

    CHECK(max_abs_diff(timestep_embedding(3, 16), timestep_embedding(4, 16)) > 1e-3);
    CHECK_THROWS_AS(timestep_embedding(1, 7), ConfigError);
    CHECK_THROWS_AS(timestep_embedding(1, 0), ConfigError);
}

TEST_CASE("model construction validates its configuration") {
    CHECK_NOTHROW(PsrModel(tiny_psr_config(), short_schedule(), 3));
    auto bad = tiny_psr_config();
    bad.style_dim = 0;
    CHECK_THROWS_AS(PsrModel(bad, short_schedule()), ConfigError);
    bad = tiny_psr_config();
    bad.hidden = 0;
    CHECK_THROWS_AS(PsrModel(bad, short_schedule()), ConfigError);
    bad = tiny_psr_config();
    bad.time_embed_dim = 7;
    CHECK_THROWS_AS(PsrModel(bad, short_schedule()), ConfigError);
    bad = tiny_psr_config();
    bad.ema_decay = 1.0;
    CHECK_THROWS_AS(PsrModel(bad, short_schedule()), ConfigError);
    bad = tiny_psr_config();
    bad.tf.model_dim = 15; // not divisible by heads
    CHECK_THROWS_AS(PsrModel(bad, short_schedule()), ConfigError);
}

TEST_CASE("score conditioning is a deterministic style-sized vector") {
    PsrModel model(tiny_psr_config(), short_schedule(), 5);
    auto tokens = encode_score_input(tiny_score(6));

    Tape tape;
    Bind bind(tape, model.params(), false);
    Tensor cond = tape.val(model.encode_score(bind, tokens));
    CHECK(cond.rows == 1);
    CHECK(cond.cols == 8);

    Tape tape2;
    Bind bind2(tape2, model.params(), false);
    CHECK(max_abs_diff(cond, tape2.val(model.encode_score(bind2, tokens))) == 0.0);

    Tape tape3;
    Bind bind3(tape3, model.params(), false);
    CHECK_THROWS_AS(model.encode_score(bind3, encode_perf_input(tiny_perf(4))), ShapeError);
    TokenSequence empty;
    empty.layout = TokenLayout::score_input;
    empty.streams.resize(7);
    Tape tape4;
    Bind bind4(tape4, model.params(), false);
    CHECK_THROWS_AS(model.encode_score(bind4, empty), EmptySequence);
}

TEST_CASE("single example loss is a finite positive scalar") {
    PsrModel model(tiny_psr_config(), short_schedule(), 5);
    auto data = tiny_psr_data(8);

    Tape tape;
    Bind bind(tape, model.params());
    Rng rng(3);
    NodeId loss = model.loss_psr(bind, data[0], rng);
    double value = tape.val(loss).item();
    CHECK(std::isfinite(value));
    CHECK(value > 0.0);
    tape.backward(loss);

    PsrExample bad = data[0];
    bad.style = Tensor(1, 5);
    Tape tape2;
    Bind bind2(tape2, model.params());
    CHECK_THROWS_AS(model.loss_psr(bind2, bad, rng), ShapeError);

    auto noise_cfg = tiny_psr_config();
    noise_cfg.predict_noise = true;
    PsrModel noise_model(noise_cfg, short_schedule(), 5);
    Tape tape3;
    Bind bind3(tape3, noise_model.params());
    CHECK(std::isfinite(tape3.val(noise_model.loss_psr(bind3, data[0], rng)).item()));
}

TEST_CASE("training is deterministic and writes its log") {
    TempDir dir("psr-train");
    auto data = tiny_psr_data(8);

    PsrTrainOptions opt;
    opt.steps = 5;
    opt.warmup = 1;
    opt.peak_lr = 1e-3;
    opt.batch = 2;
    opt.seed = 13;
    opt.loss_csv = dir.file("loss.csv");

    PsrModel a(tiny_psr_config(), short_schedule(), 5);
    double last_a = a.train(data, opt);
    CHECK(std::isfinite(last_a));
    CHECK(a.trained_steps() == 5);

    std::ifstream csv(opt.loss_csv);
    std::string line;
    std::getline(csv, line);
    CHECK(line == "step,lr,loss");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 5);

    PsrTrainOptions opt2 = opt;
    opt2.loss_csv.clear();
    PsrModel b(tiny_psr_config(), short_schedule(), 5);
    double last_b = b.train(data, opt2);
    CHECK(last_a == last_b);
    for (const auto& name : a.params().names())
        CHECK(max_abs_diff(a.params().at(name), b.params().at(name)) == 0.0);

    PsrTrainOptions stop = opt2;
    stop.stop_when_below = 1e9;
    PsrModel c(tiny_psr_config(), short_schedule(), 5);
    c.train(data, stop);
    CHECK(c.trained_steps() == 1);
}

TEST_CASE("training rejects bad inputs") {
    auto data = tiny_psr_data(8);
    PsrModel model(tiny_psr_config(), short_schedule(), 5);

    PsrTrainOptions opt;
    opt.steps = 1;
    opt.warmup = 0;
    CHECK_THROWS_AS(model.train({}, opt), ConfigError);
    opt.steps = 0;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.steps = 1;
    opt.batch = 0;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.batch = 1;

    auto wide = data;
    wide[0].style = Tensor(1, 9);
    CHECK_THROWS_AS(model.train(wide, opt), ShapeError);

    auto cramped = tiny_psr_config();
    cramped.max_notes = 3;
    PsrModel small(cramped, short_schedule(), 5);
    CHECK_THROWS_AS(small.train(data, opt), ConfigError);
}

TEST_CASE("ema weights copy on first step then lag training") {
    TempDir dir("psr-ema");
    auto data = tiny_psr_data(8);

    PsrTrainOptions one;
    one.steps = 1;
    one.warmup = 1;
    one.peak_lr = 1e-3;
    one.batch = 1;
    PsrModel model(tiny_psr_config(), short_schedule(), 5);
    model.train(data, one);
    model.save(dir.file("one.ckpt"));
    auto ck1 = load_checkpoint(dir.file("one.ckpt"));
    const Tensor* live1 = ck1.find("psr.mlp.w1");
    const Tensor* ema1 = ck1.find("ema::psr.mlp.w1");
    REQUIRE(live1 != nullptr);
    REQUIRE(ema1 != nullptr);
    CHECK(max_abs_diff(*live1, *ema1) == 0.0); // first sight copies

    PsrTrainOptions more = one;
    more.steps = 4;
    PsrModel longer(tiny_psr_config(), short_schedule(), 5);
    longer.train(data, more);
    longer.save(dir.file("more.ckpt"));
    auto ck2 = load_checkpoint(dir.file("more.ckpt"));
    const Tensor* live2 = ck2.find("psr.mlp.w2");
    const Tensor* ema2 = ck2.find("ema::psr.mlp.w2");
    REQUIRE(live2 != nullptr);
    REQUIRE(ema2 != nullptr);
    CHECK(max_abs_diff(*live2, *ema2) > 0.0); // averaged weights trail the live ones

    // Only denoiser parameters carry EMA copies.
    CHECK(ck2.find("ema::psr.proj") == nullptr);
    CHECK(ck2.find("psr.proj") != nullptr);
}

TEST_CASE("sampling requires training and is seed deterministic") {
    auto data = tiny_psr_data(8);
    auto tokens = encode_score_input(tiny_score(5));

    PsrModel model(tiny_psr_config(), short_schedule(), 5);
    CHECK_THROWS_AS(model.sample_style(tokens), StateError);

    PsrTrainOptions opt;
    opt.steps = 4;
    opt.warmup = 1;
    opt.batch = 1;
    model.train(data, opt);

    SampleOptions so;
    so.seed = 11;
    Tensor s1 = model.sample_style(tokens, so);
    CHECK(s1.rows == 1);
    CHECK(s1.cols == 8);
    for (double v : s1.data) CHECK(std::isfinite(v));

    Tensor s2 = model.sample_style(tokens, so);
    CHECK(max_abs_diff(s1, s2) == 0.0);

    SampleOptions other;
    other.seed = 12;
    CHECK(max_abs_diff(s1, model.sample_style(tokens, other)) > 0.0);

    SampleOptions ddim;
    ddim.seed = 11;
    ddim.ddim = true;
    Tensor d1 = model.sample_style(tokens, ddim);
    Tensor d2 = model.sample_style(tokens, ddim);
    CHECK(max_abs_diff(d1, d2) == 0.0);
    CHECK(max_abs_diff(d1, s1) > 0.0); // different update rule, same draws
}

TEST_CASE("checkpoints restore the sampler exactly") {
    TempDir dir("psr-ckpt");
    auto data = tiny_psr_data(8);
    auto tokens = encode_score_input(tiny_score(5));

    auto cfg = tiny_psr_config();
    cfg.predict_noise = true;
    cfg.ema_decay = 0.9;
    PsrModel model(cfg, short_schedule(), 7);
    PsrTrainOptions opt;
    opt.steps = 3;
    opt.warmup = 1;
    opt.batch = 1;
    model.train(data, opt);
    model.save(dir.file("psr.ckpt"));

    auto back = PsrModel::load(dir.file("psr.ckpt"));
    CHECK(back.config().style_dim == 8);
    CHECK(back.config().predict_noise == true);
    CHECK(back.config().ema_decay == 0.9);
    CHECK(back.schedule().steps() == 30);
    CHECK(back.schedule().beta_hi() == 0.05);
    CHECK(back.trained_steps() == 3);

    SampleOptions so;
    so.seed = 4;
    CHECK(max_abs_diff(model.sample_style(tokens, so), back.sample_style(tokens, so)) == 0.0);

    CHECK_THROWS_AS(PsrModel::load(dir.file("missing.ckpt")), IoError);
    ParamStore ps(1);
    save_checkpoint(dir.file("alien.ckpt"), ps,
                    "{\"kind\":\"joint\",\"tokenizer\":\"0000000000000000\"}");
    CHECK_THROWS_AS(PsrModel::load(dir.file("alien.ckpt")), StateError);
    save_checkpoint(dir.file("broken.ckpt"), ps, "[not, an, object");
    CHECK_THROWS_AS(PsrModel::load(dir.file("broken.ckpt")), ParseError);
}

TEST_CASE("style vector files round trip") {
    TempDir dir("style-file");
    Tensor style(1, 5);
    style[0] = 1.5;
    style[1] = -2.25;
    style[2] = 0.0;
    style[3] = 1e-300;
    style[4] = -0.0;

    auto path = dir.file("style.bin");
    save_style_vector(path, style, "cafe0123");
    auto back = load_style_vector(path);
    CHECK(back.ckpt_hash == "cafe0123");
    REQUIRE(back.style.cols == 5);
    for (int i = 0; i < 5; ++i) CHECK(back.style[i] == style[i]);
    CHECK(std::signbit(back.style[4]));

    CHECK_THROWS_AS(save_style_vector(dir.file("x.bin"), Tensor(2, 3), "h"), ShapeError);
    CHECK_THROWS_AS(save_style_vector(dir.file("x.bin"), Tensor(1, 0), "h"), ShapeError);
    CHECK_THROWS_AS(load_style_vector(dir.file("absent.bin")), IoError);

    std::ofstream bad(dir.file("bad.bin"), std::ios::binary);
    bad << "scoreperf-style v2 dim=5 ckpt=h\n";
    bad.close();
    CHECK_THROWS_AS(load_style_vector(dir.file("bad.bin")), ParseError);

    std::ofstream trunc(dir.file("trunc.bin"), std::ios::binary);
    trunc << "scoreperf-style v1 dim=5 ckpt=h\n";
    double one = 1.0;
    trunc.write(reinterpret_cast<const char*>(&one), sizeof one);
    trunc.close();
    CHECK_THROWS_AS(load_style_vector(dir.file("trunc.bin")), ParseError);

    std::ofstream zero(dir.file("zero.bin"), std::ios::binary);
    zero << "scoreperf-style v1 dim=0 ckpt=h\n";
    zero.close();
    CHECK_THROWS_AS(load_style_vector(dir.file("zero.bin")), ParseError);
}
