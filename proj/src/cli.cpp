#include "transt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "transt/config.hpp"
#include "transt/selfcheck.hpp"
#include "transt/train_toy.hpp"

namespace fs = std::filesystem;

namespace transt {

namespace {

Config load_config(const std::string& path) {
    return path.empty() ? Config{} : Config::from_json_file(path);
}

// The data directory is either one sequence (contains groundtruth.txt) or a
// directory of sequence directories, loaded in name order.
std::vector<Sequence> load_training_data(const std::string& dir) {
    if (fs::exists(fs::path(dir) / "groundtruth.txt")) return {read_sequence(dir)};
    std::vector<std::string> subdirs;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_directory() && fs::exists(entry.path() / "groundtruth.txt"))
                subdirs.push_back(entry.path().string());
    if (subdirs.empty())
        throw IoError(msg("train-toy: no sequences under ", dir,
                          " (expected groundtruth.txt)"));
    std::sort(subdirs.begin(), subdirs.end());
    std::vector<Sequence> out;
    for (const auto& sub : subdirs) out.push_back(read_sequence(sub));
    return out;
}

int run_selfcheck_cmd() {
    bool all_pass = true;
    for (const CheckResult& r : run_selfcheck()) {
        std::printf("[%s] %s: %s\n", r.pass ? "ok" : "FAIL", r.name.c_str(), r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%s\n", all_pass ? "selfcheck passed" : "selfcheck FAILED");
    return all_pass ? 0 : 1;
}

int run_synth(std::uint64_t seed, int frames, const std::string& out_dir, int width, int height,
              int distractors, bool occluder) {
    SynthSpec spec;
    spec.seed = seed;
    spec.frame_count = frames;
    spec.width = width;
    spec.height = height;
    spec.distractors = distractors;
    spec.occluder = occluder;
    spec.name = fs::path(out_dir).filename().string();
    Sequence seq = synth_sequence(spec);
    write_sequence(out_dir, seq);
    std::fprintf(stderr, "synth: wrote %d frames to %s\n", frames, out_dir.c_str());
    return 0;
}

int run_train(const std::string& config_path, const std::string& data_dir, int steps,
              const std::string& out_path, std::uint64_t seed, int log_every) {
    Config cfg = load_config(config_path);
    std::vector<Sequence> data = load_training_data(data_dir);
    Rng model_rng(seed);
    ModelParams params = ModelParams::init(model_rng, cfg.tracker.model);
    Rng data_rng(seed + 1);
    OptimState optim;
    double window_sum = 0.0;
    for (int step = 1; step <= steps; ++step) {
        std::vector<TrainPair> batch;
        batch.reserve(cfg.optim.batch_size);
        for (int b = 0; b < cfg.optim.batch_size; ++b) {
            const Sequence& seq = data[data.size() == 1 ? 0 : data_rng.next_below(data.size())];
            batch.push_back(sample_pair(seq, data_rng, cfg.tracker, cfg.sampler));
        }
        window_sum += train_step(params, optim, batch, cfg.tracker, cfg.optim, cfg.loss);
        if (log_every > 0 && step % log_every == 0) {
            std::fprintf(stderr, "step %d mean-loss %.6f\n", step, window_sum / log_every);
            window_sum = 0.0;
        }
    }
    save_model(out_path, params);
    std::fprintf(stderr, "train-toy: saved %s after %d steps\n", out_path.c_str(), steps);
    return 0;
}

void dump_attention_maps(const std::string& dir, int frame_index1,
                         const std::vector<AttentionRecord>& records) {
    for (const AttentionRecord& rec : records) {
        if (rec.head_weights.empty()) continue;
        const int n_q = rec.head_weights[0].shape[0];
        const int n_kv = rec.head_weights[0].shape[1];
        const int q_side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_q))));
        const int center = (q_side / 2) * q_side + q_side / 2;
        std::vector<double> map(static_cast<std::size_t>(n_kv), 0.0);
        for (const Tensor& head : rec.head_weights)
            for (int j = 0; j < n_kv; ++j)
                map[j] += head.at(center, j) / static_cast<double>(rec.head_weights.size());
        char name[96];
        std::snprintf(name, sizeof(name), "f%06d_L%d_%s.pgm", frame_index1, rec.layer,
                      rec.tag.c_str());
        write_pgm((fs::path(dir) / name).string(), rec.kv_height, rec.kv_width, map);
    }
}

int run_track(const std::string& config_path, const std::string& model_path,
              const std::string& seq_dir, const std::string& out_path,
              const std::string& attn_dir) {
    Config cfg = load_config(config_path);
    ModelParams params = load_model(model_path, cfg.tracker.model);
    Sequence seq = read_sequence(seq_dir);
    if (!attn_dir.empty()) fs::create_directories(attn_dir);

    TrackState state = tracker_init(cfg.tracker, params, seq.frames[0], seq.gt[0]);
    std::vector<BBox> results = {seq.gt[0]};
    for (std::size_t f = 1; f < seq.frames.size(); ++f) {
        TrackOutput out = track_frame(state, cfg.tracker, params, seq.frames[f],
                                      !attn_dir.empty());
        results.push_back(out.box);
        if (!attn_dir.empty())
            dump_attention_maps(attn_dir, static_cast<int>(f) + 1, out.records);
    }
    write_boxes_file(out_path, results);
    std::fprintf(stderr, "track: %zu frames -> %s\n", seq.frames.size(), out_path.c_str());
    return 0;
}

int run_eval(const std::string& results_path, const std::string& gt_path,
             const std::string& out_path) {
    std::vector<BBox> results = read_boxes_file(results_path);
    std::vector<BBox> gt = read_boxes_file(gt_path);
    MetricReport report = compute_metrics(results, gt);
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw IoError(msg("eval: cannot open ", out_path));
        out << metric_report_json(report);
    }
    std::fputs(metric_report_text(report).c_str(), stdout);
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"attention-fusion tracker: self checks, synthetic data, toy training, "
                 "tracking, evaluation"};
    app.name("transt");
    app.require_subcommand(1);

    auto* selfcheck_cmd =
        app.add_subcommand("selfcheck", "run the gradient and invariant suite");

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic sequence");
    std::uint64_t seed = 0;
    int frames = 30, width = 128, height = 128, distractors = 2;
    bool occluder = false;
    std::string out_dir;
    synth_cmd->add_option("--seed", seed, "generator seed");
    synth_cmd->add_option("--frames", frames, "frame count")->check(CLI::Range(2, 100000));
    synth_cmd->add_option("--out", out_dir, "output sequence directory")->required();
    synth_cmd->add_option("--width", width)->check(CLI::Range(32, 4096));
    synth_cmd->add_option("--height", height)->check(CLI::Range(32, 4096));
    synth_cmd->add_option("--distractors", distractors)->check(CLI::Range(0, 64));
    synth_cmd->add_flag("--occluder", occluder, "sweep an occluder bar over the middle third");

    auto* train_cmd = app.add_subcommand("train-toy", "overfit a model on synthetic sequences");
    std::string config_path, data_dir, model_out;
    int steps = 2000, log_every = 100;
    std::uint64_t train_seed = 1;
    train_cmd->add_option("--config", config_path, "JSON config (defaults when omitted)");
    train_cmd->add_option("--data", data_dir, "sequence directory (or directory of them)")
        ->required();
    train_cmd->add_option("--steps", steps, "optimizer steps")->check(CLI::Range(1, 10000000));
    train_cmd->add_option("--out", model_out, "output weight file")->required();
    train_cmd->add_option("--seed", train_seed, "training seed");
    train_cmd->add_option("--log-every", log_every, "stderr loss cadence, 0 silences");

    auto* track_cmd = app.add_subcommand("track", "run the tracker over a sequence");
    std::string model_path, seq_dir, results_out, attn_dir;
    track_cmd->add_option("--config", config_path, "JSON config (defaults when omitted)");
    track_cmd->add_option("--model", model_path, "weight file")->required();
    track_cmd->add_option("--seq", seq_dir, "sequence directory")->required();
    track_cmd->add_option("--out", results_out, "results file")->required();
    track_cmd->add_option("--dump-attn", attn_dir, "write per-frame attention maps here");

    auto* eval_cmd = app.add_subcommand("eval", "score results against ground truth");
    std::string results_path, gt_path, report_out;
    eval_cmd->add_option("--results", results_path, "results file")->required();
    eval_cmd->add_option("--gt", gt_path, "ground-truth file")->required();
    eval_cmd->add_option("--out", report_out, "JSON report path");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, returns 0
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (*selfcheck_cmd) return run_selfcheck_cmd();
        if (*synth_cmd)
            return run_synth(seed, frames, out_dir, width, height, distractors, occluder);
        if (*train_cmd)
            return run_train(config_path, data_dir, steps, model_out, train_seed, log_every);
        if (*track_cmd)
            return run_track(config_path, model_path, seq_dir, results_out, attn_dir);
        if (*eval_cmd) return run_eval(results_path, gt_path, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace transt
