#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "scoreperf/config.hpp"
#include "scoreperf/errors.hpp"
#include "scoreperf/filter.hpp"
#include "scoreperf/joint.hpp"
#include "scoreperf/key.hpp"
#include "scoreperf/metrics.hpp"
#include "scoreperf/midi.hpp"
#include "scoreperf/musicxml.hpp"
#include "scoreperf/notes_io.hpp"
#include "scoreperf/probe.hpp"
#include "scoreperf/psr.hpp"
#include "scoreperf/synthetic.hpp"
#include "scoreperf/tokenize.hpp"

namespace fs = std::filesystem;
using namespace scoreperf;

namespace {

bool has_ext(const std::string& path, std::initializer_list<const char*> exts) {
    std::string e = fs::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const char* x : exts)
        if (e == x) return true;
    return false;
}

bool is_score_file(const std::string& p) { return has_ext(p, {".musicxml", ".xml"}); }
bool is_perf_file(const std::string& p) { return has_ext(p, {".mid", ".midi"}); }

NoteSequence load_sequence(const std::string& path) {
    if (is_score_file(path)) return parse_musicxml_file(path).seq;
    if (is_perf_file(path)) return parse_midi_file(path).seq;
    if (has_ext(path, {".tok"})) return decode(load_tokens(path));
    throw IoError("unrecognized input type: " + path);
}

std::string file_hash(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_binary_file(path);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  (unsigned long long)fnv1a64(
                      std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    os << text;
}

std::vector<std::string> sorted_dir(const std::string& dir,
                                    std::initializer_list<const char*> exts) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string p = entry.path().string();
        if (has_ext(p, exts)) out.push_back(p);
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct PairedFile {
    std::string name, score_path, perf_path;
    int style_class = 0;
};

std::vector<PairedFile> load_pairs(const std::string& data_dir) {
    std::string manifest = (fs::path(data_dir) / "pairs.tsv").string();
    std::ifstream is(manifest);
    if (!is) throw IoError("cannot read " + manifest);
    std::vector<PairedFile> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        PairedFile p;
        std::string score_rel, perf_rel;
        if (!(ls >> p.name >> score_rel >> perf_rel >> p.style_class))
            throw ParseError("bad line in " + manifest + ": " + line);
        p.score_path = (fs::path(data_dir) / score_rel).string();
        p.perf_path = (fs::path(data_dir) / perf_rel).string();
        out.push_back(std::move(p));
    }
    if (out.empty()) throw ParseError("no pairs listed in " + manifest);
    return out;
}

Tensor load_style_checked(const std::string& path, int want_dim, const std::string& ckpt_hash) {
    StyleFile f = load_style_vector(path);
    if (int(f.style.cols) != want_dim)
        throw ShapeError("style vector " + path + " has dimension " +
                         std::to_string(f.style.cols) + ", model expects " +
                         std::to_string(want_dim));
    if (!ckpt_hash.empty() && !f.ckpt_hash.empty() && f.ckpt_hash != ckpt_hash)
        std::cerr << "warning: style vector " << path << " was extracted under checkpoint "
                  << f.ckpt_hash << ", not " << ckpt_hash << "\n";
    return f.style;
}

int cmd_gen_synthetic(const std::string& out_dir, int pieces, int bars, std::uint64_t seed,
                      bool filter_grade) {
    fs::create_directories(out_dir);
    SyntheticOptions opt;
    opt.pieces = pieces;
    opt.bars = bars;
    opt.seed = seed;
    opt.filter_grade = filter_grade;
    std::vector<SyntheticPiece> corpus = gen_synthetic(opt);

    std::ostringstream manifest;
    for (const SyntheticPiece& piece : corpus) {
        std::string score_rel = piece.name + ".musicxml";
        std::string perf_rel = piece.name + ".mid";
        write_musicxml_file((fs::path(out_dir) / score_rel).string(), piece.score);
        write_midi_file((fs::path(out_dir) / perf_rel).string(), piece.perf);
        manifest << piece.name << '\t' << score_rel << '\t' << perf_rel << '\t'
                 << piece.style_class << '\n';
    }
    write_text_file((fs::path(out_dir) / "pairs.tsv").string(), manifest.str());
    std::cout << "wrote " << corpus.size() << " pieces to " << out_dir << "\n";
    return 0;
}

int cmd_filter(const std::string& in_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ostringstream accepted, rejected;
    nlohmann::ordered_json report;
    for (const std::string& path : sorted_dir(in_dir, {".musicxml", ".xml"})) {
        std::string name = fs::path(path).filename().string();
        try {
            ParsedScore parsed = parse_musicxml_file(path);
            FilterReport r = filter_score(parsed.seq, parsed.meta);
            nlohmann::ordered_json j;
            j["accepted"] = r.accepted;
            j["failed_rules"] = r.failed_rules;
            j["key_distance"] = r.key_distance;
            report[name] = j;
            if (r.accepted) {
                accepted << name << '\n';
            } else {
                rejected << name;
                for (const std::string& rule : r.failed_rules) rejected << '\t' << rule;
                rejected << '\n';
            }
        } catch (const Error& e) {
            report[name] = {{"accepted", false}, {"failed_rules", {"parse_error"}},
                            {"error", e.what()}};
            rejected << name << "\tparse_error\n";
        }
    }
    write_text_file((fs::path(out_dir) / "accepted.txt").string(), accepted.str());
    write_text_file((fs::path(out_dir) / "rejected.txt").string(), rejected.str());
    write_text_file((fs::path(out_dir) / "filter_report.json").string(), report.dump(2) + "\n");
    std::cout << "filter report written to " << out_dir << "\n";
    return 0;
}

int cmd_tokenize(const std::string& input, std::string layout, const std::string& out) {
    NoteSequence seq = is_score_file(input) ? parse_musicxml_file(input).seq
                                            : parse_midi_file(input).seq;
    if (layout.empty()) layout = is_score_file(input) ? "score_input" : "perf_input";
    TokenLayout l = layout_from_string(layout);
    TokenSequence tokens;
    switch (l) {
    case TokenLayout::score_input: tokens = encode_score_input(seq); break;
    case TokenLayout::perf_input: tokens = encode_perf_input(seq); break;
    case TokenLayout::score_output: tokens = encode_score_output(seq); break;
    case TokenLayout::perf_output: tokens = encode_perf_output(seq); break;
    }
    save_tokens(out, tokens);
    std::cout << "wrote " << (tokens.parallel() ? tokens.note_count() : tokens.event_count())
              << " " << layout << " rows to " << out << "\n";
    return 0;
}

int cmd_detokenize(const std::string& input, const std::string& out) {
    TokenSequence tokens = load_tokens(input);
    NoteSequence seq = decode(tokens);
    if (seq.kind == SeqKind::score)
        write_musicxml_file(out, seq);
    else
        write_midi_file(out, seq);
    std::cout << "wrote " << seq.size() << " notes to " << out << "\n";
    return 0;
}

JointConfig joint_config_from(const Config& cfg) {
    JointConfig jc;
    jc.tf.layers = int(cfg.integer("layers", jc.tf.layers));
    jc.tf.heads = int(cfg.integer("heads", jc.tf.heads));
    jc.tf.model_dim = int(cfg.integer("model_dim", jc.tf.model_dim));
    jc.tf.ffn_hidden = int(cfg.integer("ffn_hidden", jc.tf.ffn_hidden));
    jc.lambda_rec = cfg.num("lambda_rec", jc.lambda_rec);
    jc.lambda_kl = cfg.num("lambda_kl", jc.lambda_kl);
    jc.encoder_mask_rate = cfg.num("encoder_mask_rate", jc.encoder_mask_rate);
    jc.decoder_mask_rate = cfg.num("decoder_mask_rate", jc.decoder_mask_rate);
    jc.sample_style = cfg.boolean("sample_style", jc.sample_style);
    jc.max_notes = int(cfg.integer("max_notes", jc.max_notes));
    return jc;
}

int cmd_train_joint(const std::string& config_path, const std::string& data_dir,
                    const std::string& out) {
    Config cfg = Config::load(config_path);
    JointModel model(joint_config_from(cfg),
                     std::uint64_t(cfg.integer("init_seed", 0x5eedf00dLL)));

    JointDataset data;
    for (const PairedFile& p : load_pairs(data_dir)) {
        NoteSequence score = parse_musicxml_file(p.score_path).seq;
        NoteSequence perf = parse_midi_file(p.perf_path).seq;
        data.paired.emplace_back(make_score_item(score), make_perf_item(perf));
        data.scores_unpaired.push_back(make_score_item(score));
        data.perfs_unpaired.push_back(make_perf_item(perf));
    }

    TrainOptions opt;
    opt.steps = cfg.integer("steps", opt.steps);
    opt.warmup = cfg.integer("warmup", opt.warmup);
    opt.peak_lr = cfg.num("peak_lr", opt.peak_lr);
    opt.batch_per_subtask = int(cfg.integer("batch_per_subtask", opt.batch_per_subtask));
    opt.unpaired_ratio = cfg.num("unpaired_ratio", opt.unpaired_ratio);
    opt.seed = std::uint64_t(cfg.integer("seed", 1));
    opt.loss_csv = cfg.str("loss_csv", "");
    opt.stop_when_below = cfg.num("stop_when_below", 0);

    LossBreakdown last = model.train(data, opt);
    model.save(out);
    std::cout << "final losses: total=" << format_double(last.total)
              << " epr=" << format_double(last.epr) << " apt=" << format_double(last.apt)
              << " rec_x=" << format_double(last.rec_x) << " rec_y=" << format_double(last.rec_y)
              << " kl=" << format_double(last.kl) << "\n"
              << "checkpoint written to " << out << "\n";
    return 0;
}

int cmd_train_psr(const std::string& config_path, const std::string& joint_path,
                  const std::string& data_dir, const std::string& out) {
    Config cfg = Config::load(config_path);
    JointModel joint = JointModel::load(joint_path);

    PsrConfig pc;
    pc.tf.layers = int(cfg.integer("layers", pc.tf.layers));
    pc.tf.heads = int(cfg.integer("heads", pc.tf.heads));
    pc.tf.model_dim = int(cfg.integer("model_dim", pc.tf.model_dim));
    pc.tf.ffn_hidden = int(cfg.integer("ffn_hidden", pc.tf.ffn_hidden));
    pc.style_dim = joint.config().tf.model_dim;
    pc.hidden = int(cfg.integer("hidden", pc.hidden));
    pc.predict_noise = cfg.boolean("predict_noise", pc.predict_noise);
    pc.ema_decay = cfg.num("ema_decay", pc.ema_decay);
    pc.max_notes = int(cfg.integer("max_notes", pc.max_notes));
    DiffusionSchedule schedule(int(cfg.integer("schedule_steps", 1000)),
                               cfg.num("beta_lo", 1e-4), cfg.num("beta_hi", 0.02));
    PsrModel model(pc, schedule, std::uint64_t(cfg.integer("init_seed", 0x5eedf00dLL)));

    std::vector<PsrExample> data;
    for (const PairedFile& p : load_pairs(data_dir)) {
        PsrExample ex;
        ex.score_in = encode_score_input(parse_musicxml_file(p.score_path).seq);
        ex.style = joint.extract_style(encode_perf_input(parse_midi_file(p.perf_path).seq));
        data.push_back(std::move(ex));
    }

    PsrTrainOptions opt;
    opt.steps = cfg.integer("steps", opt.steps);
    opt.warmup = cfg.integer("warmup", opt.warmup);
    opt.peak_lr = cfg.num("peak_lr", opt.peak_lr);
    opt.batch = int(cfg.integer("batch", opt.batch));
    opt.seed = std::uint64_t(cfg.integer("seed", 1));
    opt.loss_csv = cfg.str("loss_csv", "");
    opt.stop_when_below = cfg.num("stop_when_below", 0);

    double last = model.train(data, opt);
    model.save(out);
    std::cout << "final loss: " << format_double(last) << "\n"
              << "checkpoint written to " << out << "\n";
    return 0;
}

DecodeOptions decode_options(const std::string& mode, int k, std::uint64_t seed) {
    DecodeOptions opt;
    if (mode == "greedy")
        opt.mode = DecodeOptions::Mode::greedy;
    else if (mode == "top-k")
        opt.mode = DecodeOptions::Mode::top_k;
    else
        throw ConfigError("unknown decode mode: " + mode);
    opt.k = k;
    opt.seed = seed;
    return opt;
}

int cmd_render(const std::string& score_path, const std::string& ckpt_path,
               const std::string& style_path, const std::string& psr_path,
               const std::vector<std::string>& style_mix, const std::string& out,
               const std::string& mode, int k, std::uint64_t seed) {
    TokenSequence score_in = load_tokens(score_path);
    if (score_in.layout != TokenLayout::score_input)
        throw ConfigError("render expects score_input tokens, got " +
                          std::string(to_string(score_in.layout)));
    JointModel model = JointModel::load(ckpt_path);
    int dim = model.config().tf.model_dim;
    std::string ckpt_hash = file_hash(ckpt_path);

    int sources = int(!style_path.empty()) + int(!psr_path.empty()) + int(!style_mix.empty());
    if (sources != 1)
        throw ConfigError("render needs exactly one of --style, --psr, --style-mix");

    Tensor style;
    if (!style_path.empty()) {
        style = load_style_checked(style_path, dim, ckpt_hash);
    } else if (!psr_path.empty()) {
        PsrModel psr = PsrModel::load(psr_path);
        SampleOptions so;
        so.seed = seed;
        style = psr.sample_style(score_in, so);
        if (int(style.cols) != dim)
            throw ShapeError("sampled style dimension does not match the joint model");
    } else {
        if (style_mix.size() != 3)
            throw ConfigError("--style-mix takes: A.vec B.vec alpha");
        double alpha = std::stod(style_mix[2]);
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("mix alpha outside [0,1]");
        Tensor a = load_style_checked(style_mix[0], dim, ckpt_hash);
        Tensor b = load_style_checked(style_mix[1], dim, ckpt_hash);
        style = Tensor(1, a.cols);
        for (std::size_t i = 0; i < style.data.size(); ++i)
            style.data[i] = (1.0 - alpha) * a.data[i] + alpha * b.data[i];
    }

    RepairReport rep;
    NoteSequence perf = model.render(score_in, style, decode_options(mode, k, seed), &rep);
    write_midi_file(out, perf, default_manifest().reference_bpm);
    std::cout << "rendered " << perf.size() << " notes (" << rep.emitted << " tokens, "
              << rep.repaired << " repaired) to " << out << "\n";
    return 0;
}

int cmd_transcribe(const std::string& perf_path, const std::string& ckpt_path,
                   const std::string& out, const std::string& mode, int k, std::uint64_t seed) {
    TokenSequence perf_in = load_tokens(perf_path);
    if (perf_in.layout != TokenLayout::perf_input)
        throw ConfigError("transcribe expects perf_input tokens, got " +
                          std::string(to_string(perf_in.layout)));
    JointModel model = JointModel::load(ckpt_path);
    NoteSequence score = model.transcribe(perf_in, decode_options(mode, k, seed));
    write_musicxml_file(out, score);
    std::cout << "transcribed " << score.size() << " notes to " << out << "\n";
    return 0;
}

int cmd_extract_style(const std::string& perf_path, const std::string& ckpt_path,
                      const std::string& out) {
    TokenSequence perf_in = load_tokens(perf_path);
    if (perf_in.layout != TokenLayout::perf_input)
        throw ConfigError("extract-style expects perf_input tokens");
    JointModel model = JointModel::load(ckpt_path);
    Tensor style = model.extract_style(perf_in);
    save_style_vector(out, style, file_hash(ckpt_path));
    std::cout << "wrote " << style.cols << "-dim style vector to " << out << "\n";
    return 0;
}

int cmd_recommend_style(const std::string& score_path, const std::string& psr_path,
                        const std::string& out, std::uint64_t seed, bool ddim) {
    TokenSequence score_in = load_tokens(score_path);
    if (score_in.layout != TokenLayout::score_input)
        throw ConfigError("recommend-style expects score_input tokens");
    PsrModel model = PsrModel::load(psr_path);
    SampleOptions so;
    so.seed = seed;
    so.ddim = ddim;
    Tensor style = model.sample_style(score_in, so);
    save_style_vector(out, style, file_hash(psr_path));
    std::cout << "wrote " << style.cols << "-dim style vector to " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ref_path, const std::string& hyp_path, const std::string& suite,
             const std::string& json_out, const std::string& csv_out) {
    NoteSequence ref = load_sequence(ref_path);
    NoteSequence hyp = load_sequence(hyp_path);

    MetricReport report;
    bool scores = ref.kind == SeqKind::score && hyp.kind == SeqKind::score;
    bool perfs = ref.kind == SeqKind::performance && hyp.kind == SeqKind::performance;
    if (!scores && !perfs) throw DomainError("eval inputs must be two scores or two performances");

    auto want = [&](const char* name) { return suite == "all" || suite == name; };
    if (scores && want("muster")) {
        report.muster = muster(ref, hyp);
        report.has_muster = true;
    }
    if (scores && want("score-sim")) {
        report.score_sim = score_similarity(ref, hyp);
        report.has_score_sim = true;
    }
    if (perfs && want("epr")) {
        report.align_stats = epr_accuracy(ref, hyp);
        report.has_align = true;
    }
    if (perfs && want("dist")) {
        report.dist = dist_stats(ref, hyp);
        report.has_dist = true;
    }
    if (!report.has_muster && !report.has_score_sim && !report.has_align && !report.has_dist)
        throw ConfigError("suite '" + suite + "' does not apply to these input kinds");

    std::string json = to_json(report);
    std::cout << json;
    if (!json_out.empty()) write_text_file(json_out, json);
    if (!csv_out.empty()) write_text_file(csv_out, csv_header() + "\n" + to_csv_row(report) + "\n");
    return 0;
}

int cmd_probe(const std::vector<std::string>& vector_files, const std::string& dir,
              const std::string& labels_path, int bottleneck, const std::string& json_out,
              const std::string& proj_out) {
    std::vector<std::string> files = vector_files;
    if (!dir.empty())
        for (const std::string& f : sorted_dir(dir, {".vec"})) files.push_back(f);
    if (files.size() < 2) throw ConfigError("probe needs at least 2 style vectors");

    Tensor vectors;
    for (std::size_t i = 0; i < files.size(); ++i) {
        StyleFile f = load_style_vector(files[i]);
        if (i == 0) vectors = Tensor(files.size(), f.style.cols);
        if (f.style.cols != vectors.cols)
            throw ShapeError("style vectors have mixed dimensions");
        for (std::size_t c = 0; c < vectors.cols; ++c) vectors.at(i, c) = f.style[c];
    }

    std::vector<int> labels;
    if (!labels_path.empty()) {
        std::ifstream is(labels_path);
        if (!is) throw IoError("cannot read " + labels_path);
        int v;
        while (is >> v) labels.push_back(v);
        if (labels.size() != files.size())
            throw ShapeError("label count does not match vector count");
    }

    LatentMetrics m = latent_metrics(vectors, labels.empty() ? nullptr : &labels, bottleneck);
    nlohmann::ordered_json j;
    j["active_units"] = m.active_units;
    j["kl_to_prior"] = m.kl_to_prior;
    if (m.has_probe) {
        j["probe"] = {{"accuracy", m.probe.accuracy},       {"precision", m.probe.precision},
                      {"recall", m.probe.recall},           {"f1", m.probe.f1},
                      {"train_accuracy", m.probe.train_accuracy}};
    }
    std::string json = j.dump(2) + "\n";
    std::cout << json;
    if (!json_out.empty()) write_text_file(json_out, json);

    if (!proj_out.empty()) {
        if (labels.empty()) throw ConfigError("--proj requires --labels");
        Probe probe(2);
        probe.fit(vectors, labels);
        write_text_file(proj_out, projection_csv(project_2d(probe, vectors, labels)));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"score-performance modeling toolkit"};
    app.require_subcommand(1);
    int rc = 0;

    // gen-synthetic
    std::string gs_out;
    int gs_pieces = 4, gs_bars = 2;
    std::uint64_t gs_seed = 1;
    bool gs_filter_grade = false;
    auto* gs = app.add_subcommand("gen-synthetic", "write a seeded toy corpus of paired pieces");
    gs->add_option("--out", gs_out, "output directory")->required();
    gs->add_option("--pieces", gs_pieces, "number of pieces");
    gs->add_option("--bars", gs_bars, "4/4 bars per piece");
    gs->add_option("--seed", gs_seed, "generator seed");
    gs->add_flag("--filter-grade", gs_filter_grade, "make pieces that pass the corpus filter");
    gs->callback([&] { rc = cmd_gen_synthetic(gs_out, gs_pieces, gs_bars, gs_seed, gs_filter_grade); });

    // filter
    std::string fl_in, fl_out;
    auto* fl = app.add_subcommand("filter", "apply corpus admission rules to a score directory");
    fl->add_option("input", fl_in, "directory of MusicXML files")->required();
    fl->add_option("--out", fl_out, "report directory")->required();
    fl->callback([&] { rc = cmd_filter(fl_in, fl_out); });

    // tokenize
    std::string tk_in, tk_layout, tk_out;
    auto* tk = app.add_subcommand("tokenize", "encode a score or performance into tokens");
    tk->add_option("input", tk_in, "MusicXML or MIDI file")->required();
    tk->add_option("--layout", tk_layout,
                   "score_input|perf_input|score_output|perf_output (default by file type)");
    tk->add_option("--out", tk_out, "token file")->required();
    tk->callback([&] { rc = cmd_tokenize(tk_in, tk_layout, tk_out); });

    // detokenize
    std::string dt_in, dt_out;
    auto* dt = app.add_subcommand("detokenize", "decode tokens back to MusicXML or MIDI");
    dt->add_option("input", dt_in, "token file")->required();
    dt->add_option("--out", dt_out, "output file")->required();
    dt->callback([&] { rc = cmd_detokenize(dt_in, dt_out); });

    // train-joint
    std::string tj_cfg, tj_data, tj_out;
    auto* tj = app.add_subcommand("train-joint", "train the joint content/style model");
    tj->add_option("--config", tj_cfg, "key = value config file")->required();
    tj->add_option("--data", tj_data, "corpus directory with pairs.tsv")->required();
    tj->add_option("--out", tj_out, "checkpoint path")->required();
    tj->callback([&] { rc = cmd_train_joint(tj_cfg, tj_data, tj_out); });

    // train-psr
    std::string tp_cfg, tp_joint, tp_data, tp_out;
    auto* tp = app.add_subcommand("train-psr", "train the diffusion style recommender");
    tp->add_option("--config", tp_cfg, "key = value config file")->required();
    tp->add_option("--joint", tp_joint, "frozen joint checkpoint")->required();
    tp->add_option("--data", tp_data, "corpus directory with pairs.tsv")->required();
    tp->add_option("--out", tp_out, "checkpoint path")->required();
    tp->callback([&] { rc = cmd_train_psr(tp_cfg, tp_joint, tp_data, tp_out); });

    // render
    std::string rd_score, rd_ckpt, rd_style, rd_psr, rd_out, rd_mode = "greedy";
    std::vector<std::string> rd_mix;
    int rd_k = 5;
    std::uint64_t rd_seed = 1;
    auto* rd = app.add_subcommand("render", "generate performance MIDI from score tokens");
    rd->add_option("--score", rd_score, "score_input token file")->required();
    rd->add_option("--ckpt", rd_ckpt, "joint checkpoint")->required();
    rd->add_option("--style", rd_style, "style vector file");
    rd->add_option("--psr", rd_psr, "sample the style from this recommender checkpoint");
    rd->add_option("--style-mix", rd_mix, "A.vec B.vec alpha — convex combination")
        ->expected(3);
    rd->add_option("--out", rd_out, "output MIDI")->required();
    rd->add_option("--mode", rd_mode, "greedy|top-k");
    rd->add_option("--k", rd_k, "top-k width");
    rd->add_option("--seed", rd_seed, "sampling seed");
    rd->callback([&] {
        rc = cmd_render(rd_score, rd_ckpt, rd_style, rd_psr, rd_mix, rd_out, rd_mode, rd_k,
                        rd_seed);
    });

    // transcribe
    std::string tr_perf, tr_ckpt, tr_out, tr_mode = "greedy";
    int tr_k = 5;
    std::uint64_t tr_seed = 1;
    auto* tr = app.add_subcommand("transcribe", "recover notation from performance tokens");
    tr->add_option("--perf", tr_perf, "perf_input token file")->required();
    tr->add_option("--ckpt", tr_ckpt, "joint checkpoint")->required();
    tr->add_option("--out", tr_out, "output MusicXML")->required();
    tr->add_option("--mode", tr_mode, "greedy|top-k");
    tr->add_option("--k", tr_k, "top-k width");
    tr->add_option("--seed", tr_seed, "sampling seed");
    tr->callback([&] { rc = cmd_transcribe(tr_perf, tr_ckpt, tr_out, tr_mode, tr_k, tr_seed); });

    // extract-style
    std::string es_perf, es_ckpt, es_out;
    auto* es = app.add_subcommand("extract-style", "posterior-mean style vector of a performance");
    es->add_option("--perf", es_perf, "perf_input token file")->required();
    es->add_option("--ckpt", es_ckpt, "joint checkpoint")->required();
    es->add_option("--out", es_out, "style vector file")->required();
    es->callback([&] { rc = cmd_extract_style(es_perf, es_ckpt, es_out); });

    // recommend-style
    std::string rs_score, rs_psr, rs_out;
    std::uint64_t rs_seed = 1;
    bool rs_ddim = false;
    auto* rs = app.add_subcommand("recommend-style", "sample a style vector for a score");
    rs->add_option("--score", rs_score, "score_input token file")->required();
    rs->add_option("--psr", rs_psr, "recommender checkpoint")->required();
    rs->add_option("--out", rs_out, "style vector file")->required();
    rs->add_option("--seed", rs_seed, "sampling seed");
    rs->add_flag("--ddim", rs_ddim, "deterministic denoising updates");
    rs->callback([&] { rc = cmd_recommend_style(rs_score, rs_psr, rs_out, rs_seed, rs_ddim); });

    // eval
    std::string ev_ref, ev_hyp, ev_suite = "all", ev_json, ev_csv;
    auto* ev = app.add_subcommand("eval", "compare two scores or two performances");
    ev->add_option("ref", ev_ref, "reference file")->required();
    ev->add_option("hyp", ev_hyp, "hypothesis file")->required();
    ev->add_option("--suite", ev_suite, "muster|score-sim|epr|dist|all");
    ev->add_option("--json", ev_json, "also write the JSON report here");
    ev->add_option("--csv", ev_csv, "also write a CSV header+row here");
    ev->callback([&] { rc = cmd_eval(ev_ref, ev_hyp, ev_suite, ev_json, ev_csv); });

    // probe
    std::vector<std::string> pb_files;
    std::string pb_dir, pb_labels, pb_json, pb_proj;
    int pb_bottleneck = 0;
    auto* pb = app.add_subcommand("probe", "latent informativeness of style vectors");
    pb->add_option("vectors", pb_files, "style vector files");
    pb->add_option("--dir", pb_dir, "directory of .vec files (sorted)");
    pb->add_option("--labels", pb_labels, "text file, one integer label per vector");
    pb->add_option("--bottleneck", pb_bottleneck, "probe bottleneck width (0 = none)");
    pb->add_option("--json", pb_json, "also write the JSON report here");
    pb->add_option("--proj", pb_proj, "write 2D projection CSV (needs --labels)");
    pb->callback([&] {
        rc = cmd_probe(pb_files, pb_dir, pb_labels, pb_bottleneck, pb_json, pb_proj);
    });

    try {
        CLI11_PARSE(app, argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
