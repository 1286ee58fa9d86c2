#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "scoreperf/errors.hpp"
#include "scoreperf/joint.hpp"
#include "scoreperf/vocab.hpp"

using namespace scoreperf;
using namespace scoreperf::test;

namespace {

JointConfig tiny_config() {
    JointConfig cfg;
    cfg.tf = TransformerConfig{1, 2, 16, 32};
    return cfg;
}

JointDataset tiny_dataset() {
    JointDataset data;
    data.paired.emplace_back(make_score_item(tiny_score(5)), make_perf_item(tiny_perf(5)));
    data.paired.emplace_back(make_score_item(tiny_score(7)), make_perf_item(tiny_perf(7)));
    data.scores_unpaired.push_back(make_score_item(tiny_score(4)));
    data.perfs_unpaired.push_back(make_perf_item(tiny_perf(6)));
    return data;
}

JointModel::BatchRef full_batch(const JointDataset& data) {
    JointModel::BatchRef batch;
    batch.epr.emplace_back(&data.paired[0].first, &data.paired[0].second);
    batch.apt.emplace_back(&data.paired[1].second, &data.paired[1].first);
    batch.rec_score.push_back(&data.scores_unpaired[0]);
    batch.rec_perf.push_back(&data.perfs_unpaired[0]);
    return batch;
}

std::vector<std::string> lines_of(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("token items carry the expected layouts") {
    auto x = make_score_item(tiny_score(4));
    CHECK(x.in.layout == TokenLayout::score_input);
    CHECK(x.out.layout == TokenLayout::score_output);
    CHECK(x.in.note_count() == 4);
    auto y = make_perf_item(tiny_perf(4));
    CHECK(y.in.layout == TokenLayout::perf_input);
    CHECK(y.out.layout == TokenLayout::perf_output);
    CHECK(y.in.note_count() == 4);
}

TEST_CASE("total loss is the exact weighted sum of its parts") {
    auto data = tiny_dataset();
    auto batch = full_batch(data);

    JointModel model(tiny_config(), 21);
    Tape tape;
    Bind bind(tape, model.params());
    Rng rng(5);
    auto nodes = model.total_loss(bind, batch, rng);
    auto b = nodes.values(tape);

    double expect = b.epr + b.apt + 0.2 * (b.rec_x + b.rec_y) + 0.1 * b.kl;
    CHECK(std::fabs(b.total - expect) < 1e-12);
    CHECK(b.epr > 0);
    CHECK(b.apt > 0);
    CHECK(b.rec_x > 0);
    CHECK(b.rec_y > 0);
    CHECK(b.kl >= 0);

    // The graph is differentiable end to end.
    tape.backward(nodes.total);
    bool any_grad = false;
    for (const auto& [name, id] : bind.bound()) any_grad |= tape.grad(id).numel() > 0;
    CHECK(any_grad);
}

TEST_CASE("zeroing a lambda removes exactly those terms") {
    auto data = tiny_dataset();
    auto batch = full_batch(data);

    auto run = [&](double lambda_rec, double lambda_kl) {
        JointConfig cfg = tiny_config();
        cfg.lambda_rec = lambda_rec;
        cfg.lambda_kl = lambda_kl;
        JointModel model(cfg, 21);
        Tape tape;
        Bind bind(tape, model.params());
        Rng rng(5);
        return model.total_loss(bind, batch, rng).values(tape);
    };

    auto base = run(0.2, 0.1);
    auto no_rec = run(0.0, 0.1);
    auto no_kl = run(0.2, 0.0);
    auto bare = run(0.0, 0.0);

    // Same parameters and rng draws: the components agree bitwise...
    CHECK(no_rec.epr == base.epr);
    CHECK(no_rec.rec_x == base.rec_x);
    CHECK(no_kl.kl == base.kl);

    // ...and each total drops exactly the zeroed terms.
    CHECK(std::fabs(no_rec.total - (base.epr + base.apt + 0.1 * base.kl)) < 1e-12);
    CHECK(std::fabs(no_kl.total - (base.epr + base.apt + 0.2 * (base.rec_x + base.rec_y))) <
          1e-12);
    CHECK(std::fabs(bare.total - (base.epr + base.apt)) < 1e-12);
}

TEST_CASE("subtask subsets contribute only their own losses") {
    auto data = tiny_dataset();
    JointModel model(tiny_config(), 21);
    // A few optimizer steps move the style heads off their zero init so the
    // posterior no longer coincides with the prior (where KL would be 0).
    // Gradient reaches them only after the zero-initialized output head and
    // cross-attention projections have become nonzero themselves.
    TrainOptions nudge;
    nudge.steps = 6;
    nudge.warmup = 2;
    nudge.batch_per_subtask = 1;
    nudge.unpaired_ratio = 0;
    nudge.peak_lr = 5e-3;
    model.train(data, nudge);

    JointModel::BatchRef epr_only;
    epr_only.epr.emplace_back(&data.paired[0].first, &data.paired[0].second);
    Tape tape;
    Bind bind(tape, model.params());
    Rng rng(5);
    auto b = model.total_loss(bind, epr_only, rng).values(tape);
    CHECK(b.apt == 0.0);
    CHECK(b.rec_x == 0.0);
    CHECK(b.rec_y == 0.0);
    CHECK(b.kl > 0.0); // the EPR path still posts a style posterior
    CHECK(std::fabs(b.total - (b.epr + 0.1 * b.kl)) < 1e-12);

    JointModel::BatchRef empty;
    Tape tape2;
    Bind bind2(tape2, model.params());
    CHECK_THROWS_AS(model.total_loss(bind2, empty, rng), DegenerateBatch);
}

TEST_CASE("training is deterministic and reduces the loss") {
    TempDir dir("joint-train");
    auto data = tiny_dataset();

    JointConfig cfg = tiny_config();
    cfg.lambda_rec = 0;
    cfg.lambda_kl = 0;
    cfg.encoder_mask_rate = 0;
    cfg.decoder_mask_rate = 0;
    cfg.sample_style = false;

    TrainOptions opt;
    opt.steps = 30;
    opt.warmup = 3;
    opt.peak_lr = 3e-3;
    opt.batch_per_subtask = 1;
    opt.unpaired_ratio = 0;
    opt.seed = 3;
    opt.loss_csv = dir.file("loss.csv");

    JointModel a(cfg, 9);
    auto last_a = a.train(data, opt);

    auto rows = lines_of(opt.loss_csv);
    REQUIRE(rows.size() == 31); // header + one row per step
    CHECK(rows[0] == "step,lr,total,epr,apt,rec_x,rec_y,kl");
    auto total_of = [](const std::string& row) {
        std::stringstream ss(row);
        std::string f;
        for (int i = 0; i < 3; ++i) std::getline(ss, f, ',');
        return std::stod(f);
    };
    CHECK(total_of(rows.back()) < 0.9 * total_of(rows[1]));
    CHECK(last_a.total == doctest::Approx(total_of(rows.back())).epsilon(1e-9));

    JointModel b(cfg, 9);
    TrainOptions opt2 = opt;
    opt2.loss_csv.clear();
    auto last_b = b.train(data, opt2);
    CHECK(last_a.total == last_b.total);
    for (const auto& name : a.params().names())
        CHECK(max_abs_diff(a.params().at(name), b.params().at(name)) == 0.0);

    // A second run appends rows without repeating the header.
    b.train(data, opt);
    auto rows2 = lines_of(opt.loss_csv);
    CHECK(rows2.size() == 61);
    CHECK(rows2[31].substr(0, 2) == "1,");
}

TEST_CASE("early stopping cuts the run short") {
    auto data = tiny_dataset();
    TempDir dir("joint-stop");
    JointConfig cfg = tiny_config();
    TrainOptions opt;
    opt.steps = 50;
    opt.batch_per_subtask = 1;
    opt.unpaired_ratio = 0;
    opt.stop_when_below = 1e6; // satisfied immediately
    opt.loss_csv = dir.file("loss.csv");
    JointModel model(cfg, 2);
    model.train(data, opt);
    CHECK(lines_of(opt.loss_csv).size() == 2); // header + a single step
}

TEST_CASE("training rejects bad options and oversized input") {
    auto data = tiny_dataset();
    JointModel model(tiny_config(), 2);

    TrainOptions opt;
    opt.warmup = 0;
    opt.steps = 0;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.steps = 1;
    opt.batch_per_subtask = 0;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.batch_per_subtask = 1;
    opt.unpaired_ratio = -0.1;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.unpaired_ratio = 1.5;
    CHECK_THROWS_AS(model.train(data, opt), ConfigError);
    opt.unpaired_ratio = 0.5;

    JointDataset no_pairs;
    no_pairs.scores_unpaired = data.scores_unpaired;
    no_pairs.perfs_unpaired = data.perfs_unpaired;
    CHECK_THROWS_AS(model.train(no_pairs, opt), ConfigError);

    JointDataset no_pool = data;
    no_pool.perfs_unpaired.clear();
    CHECK_THROWS_AS(model.train(no_pool, opt), ConfigError); // ratio > 0 needs both pools
    opt.unpaired_ratio = 0;
    CHECK_NOTHROW(model.train(no_pool, opt));

    JointConfig cramped = tiny_config();
    cramped.max_notes = 4;
    JointModel small(cramped, 2);
    CHECK_THROWS_AS(small.train(data, opt), ConfigError); // 5-note pair over the limit
}

TEST_CASE("unpaired ratio zero skips the reconstruction subtasks") {
    auto data = tiny_dataset();
    TempDir dir("joint-ratio");
    JointConfig cfg = tiny_config();
    TrainOptions opt;
    opt.steps = 2;
    opt.warmup = 1;
    opt.batch_per_subtask = 1;
    opt.unpaired_ratio = 0;
    opt.loss_csv = dir.file("loss.csv");
    JointModel model(cfg, 2);
    auto last = model.train(data, opt);
    CHECK(last.rec_x == 0.0);
    CHECK(last.rec_y == 0.0);
    CHECK(last.epr > 0.0);

    TrainOptions mixed = opt;
    mixed.unpaired_ratio = 1.0;
    mixed.loss_csv.clear();
    auto with_rec = model.train(data, mixed);
    CHECK(with_rec.rec_x > 0.0);
    CHECK(with_rec.rec_y > 0.0);
}

TEST_CASE("render emits one performance note per score note") {
    JointModel model(tiny_config(), 13);
    auto x = make_score_item(tiny_score(4));
    Tensor style(1, 16);

    RepairReport report;
    auto perf = model.render(x.in, style, {}, &report);
    CHECK(perf.kind == SeqKind::performance);
    CHECK(perf.size() == 4);
    CHECK(report.emitted >= 12); // at least on/velocity/duration per note
    CHECK(validate(perf).empty());

    // Same seed and params: decoding is reproducible.
    auto again = model.render(x.in, style, {}, nullptr);
    REQUIRE(again.size() == perf.size());
    for (size_t i = 0; i < perf.size(); ++i) {
        CHECK(perf.perf[i].pitch == again.perf[i].pitch);
        CHECK(perf.perf[i].onset == again.perf[i].onset);
        CHECK(perf.perf[i].velocity == again.perf[i].velocity);
    }

    Tensor bad(2, 16);
    CHECK_THROWS_AS(model.render(x.in, bad, {}), ShapeError);
    Tensor narrow(1, 8);
    CHECK_THROWS_AS(model.render(x.in, narrow, {}), ShapeError);
    TokenSequence empty;
    empty.layout = TokenLayout::score_input;
    empty.streams.resize(7);
    CHECK_THROWS_AS(model.render(empty, style, {}), EmptySequence);
    CHECK_THROWS_AS(model.render(make_perf_item(tiny_perf(3)).in, style, {}), ShapeError);
}

TEST_CASE("transcribe emits one score note per performance note") {
    JointModel model(tiny_config(), 13);
    auto y = make_perf_item(tiny_perf(5));
    auto score = model.transcribe(y.in);
    CHECK(score.kind == SeqKind::score);
    CHECK(score.size() == 5);

    DecodeOptions sampled;
    sampled.mode = DecodeOptions::Mode::top_k;
    sampled.k = 3;
    sampled.seed = 4;
    auto s1 = model.transcribe(y.in, sampled);
    auto s2 = model.transcribe(y.in, sampled);
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i)
        CHECK(s1.score[i].pitch == s2.score[i].pitch); // same seed, same draws

    TokenSequence empty;
    empty.layout = TokenLayout::perf_input;
    empty.streams.resize(4);
    CHECK_THROWS_AS(model.transcribe(empty), EmptySequence);
}

TEST_CASE("style extraction averages chunk posteriors") {
    JointConfig cfg = tiny_config();
    cfg.max_notes = 64;
    JointModel model(cfg, 17);
    auto y = make_perf_item(tiny_perf(12));

    Tensor via_extract = model.extract_style(y.in);
    REQUIRE(via_extract.rows == 1);
    REQUIRE(via_extract.cols == 16);

    // One chunk: identical to the posterior mean of the whole sequence.
    Tape tape;
    Bind bind(tape, model.params(), false);
    auto post = model.style_posterior(bind, y.in);
    CHECK(max_abs_diff(via_extract, tape.val(post.mean)) == 0.0);

    // Chunked extraction still yields a deterministic vector of the same shape.
    JointConfig small = tiny_config();
    small.max_notes = 5;
    JointModel chunked(small, 17);
    Tensor c1 = chunked.extract_style(y.in);
    Tensor c2 = chunked.extract_style(y.in);
    CHECK(c1.rows == 1);
    CHECK(max_abs_diff(c1, c2) == 0.0);

    TokenSequence empty;
    empty.layout = TokenLayout::perf_input;
    empty.streams.resize(4);
    CHECK_THROWS_AS(model.extract_style(empty), EmptySequence);
}

TEST_CASE("checkpoints restore the model exactly") {
    TempDir dir("joint-ckpt");
    auto data = tiny_dataset();

    JointConfig cfg = tiny_config();
    cfg.lambda_rec = 0.3;
    cfg.max_notes = 100;
    JointModel model(cfg, 23);
    TrainOptions opt;
    opt.steps = 2;
    opt.warmup = 1;
    opt.batch_per_subtask = 1;
    opt.unpaired_ratio = 0;
    model.train(data, opt);

    auto path = dir.file("joint.ckpt");
    model.save(path);
    auto back = JointModel::load(path);
    CHECK(back.config().tf.layers == 1);
    CHECK(back.config().tf.model_dim == 16);
    CHECK(back.config().lambda_rec == 0.3);
    CHECK(back.config().max_notes == 100);
    for (const auto& name : model.params().names())
        CHECK(max_abs_diff(model.params().at(name), back.params().at(name)) == 0.0);

    // Loaded and source models decode identically.
    auto x = make_score_item(tiny_score(4));
    Tensor style(1, 16);
    auto p1 = model.render(x.in, style, {});
    auto p2 = back.render(x.in, style, {});
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) CHECK(p1.perf[i].pitch == p2.perf[i].pitch);

    CHECK_THROWS_AS(JointModel::load(dir.file("missing.ckpt")), IoError);
}

TEST_CASE("checkpoints from other tokenizers or kinds are refused") {
    TempDir dir("joint-refuse");
    ParamStore ps(1);

    auto stale = dir.file("stale.ckpt");
    save_checkpoint(stale, ps,
                    "{\"kind\":\"joint\",\"tokenizer\":\"0000000000000000\"}");
    CHECK_THROWS_AS(JointModel::load(stale), StateError);

    auto wrong = dir.file("wrong.ckpt");
    save_checkpoint(wrong, ps, "{\"kind\":\"psr\",\"tokenizer\":\"" +
                                   manifest_hash(default_manifest()) + "\"}");
    CHECK_THROWS_AS(JointModel::load(wrong), StateError);

    auto garbled = dir.file("garbled.ckpt");
    save_checkpoint(garbled, ps, "not json");
    CHECK_THROWS_AS(JointModel::load(garbled), ParseError);
}
