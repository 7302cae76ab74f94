#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "streampoint/checkpoint.hpp"
#include "streampoint/dataset_io.hpp"
#include "streampoint/evalsuite.hpp"
#include "streampoint/heads.hpp"
#include "streampoint/trainer.hpp"

namespace sp = streampoint;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct WallTimer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }
};

std::string code_hash() {
    try {
        auto bytes = sp::gen::read_file_bytes("/proc/self/exe");
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%08x", sp::crc32(bytes.data(), bytes.size()));
        return buf;
    } catch (...) {
        return "unknown";
    }
}

std::string iso_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// One manifest per run; holds everything needed to reproduce the command.
void write_run_manifest(const fs::path& dir, const std::string& command, const json& config,
                        std::uint64_t seed, const std::string& started, double wall_ms,
                        const json& extra = json::object()) {
    json j{{"command", command}, {"config", config},   {"seed", seed},
           {"code_hash", code_hash()}, {"started", started}, {"wall_ms", wall_ms}};
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    fs::create_directories(dir);
    std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
    out << j.dump(2) << "\n";
    if (!out) throw sp::IoError("cannot write run manifest in " + dir.string());
}

json load_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw sp::IoError("cannot open " + p.string());
    return json::parse(in);
}

// ---------------------------------------------------------------- scenegen

struct ScenegenArgs {
    std::uint64_t seed = 0;
    int frames = 6;
    int res = 32;
    int count = 1;
    int primitives = 5;
    std::string trajectory = "orbit";
    bool dynamic = false;
    bool metric = false;
    double focal = 0;
    std::string out;
};

int cmd_scenegen(const ScenegenArgs& a) {
    WallTimer timer;
    const std::string started = iso_now();
    sp::gen::SceneConfig cfg;
    cfg.n_frames = a.frames;
    cfg.resolution = a.res;
    cfg.n_primitives = a.primitives;
    cfg.trajectory = sp::gen::trajectory_from_string(a.trajectory);
    cfg.dynamic = a.dynamic;
    cfg.metric_scale = a.metric;
    cfg.focal = a.focal;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        // config came straight from flags, so reject it as a flag error
        throw sp::ConfigError(e.what());
    }

    const fs::path out(a.out);
    for (int i = 0; i < a.count; ++i) {
        const std::uint64_t scene_seed = a.seed + static_cast<std::uint64_t>(i);
        auto seq = sp::gen::generate_scene(scene_seed, cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%04d", i);
        sp::gen::write_scene(out / name, seq);
        std::cout << name << ": " << cfg.n_frames << " frames @ " << cfg.resolution << "x"
                  << cfg.resolution << " seed=" << scene_seed << "\n";
    }

    json cfg_json{{"seed", a.seed},       {"frames", a.frames},
                  {"res", a.res},         {"count", a.count},
                  {"primitives", a.primitives}, {"trajectory", a.trajectory},
                  {"dynamic", a.dynamic}, {"metric", a.metric},
                  {"focal", a.focal},     {"out", a.out}};
    write_run_manifest(out, "scenegen", cfg_json, a.seed, started, timer.ms());
    return 0;
}

// ------------------------------------------------------------------- train

json train_config_to_json(const sp::train::TrainConfig& c) {
    return json{{"steps", c.steps},
                {"lr", c.lr},
                {"batch", c.batch},
                {"frames_min", c.frames_min},
                {"frames_max", c.frames_max},
                {"seed", c.seed},
                {"policy", c.policy},
                {"alpha", c.alpha},
                {"lambda_pose", c.lambda_pose},
                {"ckpt_every", c.ckpt_every},
                {"warmup_steps", c.warmup_steps},
                {"color_jitter", c.color_jitter},
                {"early_stop_frac", c.early_stop_frac},
                {"scale_mode",
                 c.scale_mode == sp::loss::ScaleMode::PerSequence ? "sequence" : "frame"},
                {"model", sp::net::config_to_json(c.model)}};
}

void train_config_apply_json(sp::train::TrainConfig& c, const json& j) {
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.frames_min = j.value("frames_min", c.frames_min);
    c.frames_max = j.value("frames_max", c.frames_max);
    c.seed = j.value("seed", c.seed);
    c.policy = j.value("policy", c.policy);
    c.alpha = j.value("alpha", c.alpha);
    c.lambda_pose = j.value("lambda_pose", c.lambda_pose);
    c.ckpt_every = j.value("ckpt_every", c.ckpt_every);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.color_jitter = j.value("color_jitter", c.color_jitter);
    c.early_stop_frac = j.value("early_stop_frac", c.early_stop_frac);
    if (j.contains("scale_mode")) {
        const std::string m = j.at("scale_mode").get<std::string>();
        if (m == "sequence") c.scale_mode = sp::loss::ScaleMode::PerSequence;
        else if (m == "frame") c.scale_mode = sp::loss::ScaleMode::PerFrame;
        else throw sp::ConfigError("train: unknown scale_mode " + m);
    }
    if (j.contains("model")) c.model = sp::net::config_from_json(j.at("model"));
}

// ------------------------------------------------------------------ stream

struct StreamArgs {
    std::string ckpt;
    std::string scene;
    std::string policy = "causal";
    std::string dump;
    std::string stats;
};

int cmd_stream(const StreamArgs& a) {
    WallTimer timer;
    const std::string started = iso_now();
    if (a.dump.empty() && a.stats.empty())
        throw sp::ConfigError("stream: pass --dump-pred and/or --stats");

    const auto policy = sp::net::CachePolicy::parse(a.policy);
    auto model = sp::net::load_model<float>(a.ckpt);
    sp::gen::SceneReader reader(a.scene);
    const int res = reader.resolution();
    if (res % model.cfg.patch != 0)
        throw sp::ShapeError("stream: scene resolution " + std::to_string(res) +
                             " not divisible by model patch " +
                             std::to_string(model.cfg.patch));
    const int g = res / model.cfg.patch;
    const int k_tokens = g * g;

    sp::net::StreamSession<float> session(model, policy);
    const fs::path dump(a.dump);
    if (!a.dump.empty()) fs::create_directories(dump);

    auto emit = [&](int index, const sp::net::Pyramid<float>& pyr) {
        if (a.dump.empty()) return;
        auto graph = sp::net::predict_frame(model, pyr, g, g);
        auto pred = sp::net::materialize_prediction(graph, static_cast<double>(res));
        // both files land on disk before the next frame is read
        sp::gen::write_prediction(dump, index, pred);
    };

    for (int t = 0; t < reader.n_frames(); ++t) {
        auto sf = reader.load_frame(t);
        auto pyr = session.ingest(sf.frame.rgb, sf.frame.h, sf.frame.w);
        if (pyr) emit(t, *pyr);
    }
    if (policy.kind == sp::net::PolicyKind::FullAttention) {
        auto pyrs = session.finalize();
        for (int t = 0; t < static_cast<int>(pyrs.size()); ++t) emit(t, pyrs[t]);
    }

    // cache residency must respect the policy bound (plus pinned frame 1)
    const int n = reader.n_frames();
    std::int64_t bound = static_cast<std::int64_t>(n) * k_tokens;
    if (policy.kind == sp::net::PolicyKind::Window)
        bound = static_cast<std::int64_t>(policy.window + 1) * k_tokens;
    std::int64_t peak = 0;
    for (const auto& st : session.stats()) peak = std::max(peak, st.resident_tokens);
    if (peak > bound)
        throw sp::ContractError("stream: cache exceeded policy bound: " + std::to_string(peak) +
                                " > " + std::to_string(bound));

    if (!a.stats.empty()) {
        std::ofstream out(a.stats, std::ios::trunc);
        out << "t,attended_tokens,resident_tokens,wall_ms\n";
        for (const auto& st : session.stats()) {
            char row[128];
            std::snprintf(row, sizeof(row), "%d,%lld,%lld,%.3f\n", st.t,
                          static_cast<long long>(st.attended_tokens),
                          static_cast<long long>(st.resident_tokens), st.wall_ms);
            out << row;
        }
        if (!out) throw sp::IoError("stream: cannot write " + a.stats);
    }

    json cfg_json{{"ckpt", a.ckpt},
                  {"scene", a.scene},
                  {"policy", a.policy},
                  {"dump_pred", a.dump},
                  {"stats", a.stats}};
    const fs::path manifest_dir = !a.dump.empty() ? dump : fs::path(a.stats).parent_path();
    write_run_manifest(manifest_dir.empty() ? fs::path(".") : manifest_dir, "stream", cfg_json,
                       reader.seed(), started, timer.ms(),
                       json{{"peak_resident_tokens", peak}, {"cache_bound", bound}});
    std::cout << "streamed " << n << " frames, policy=" << policy.str()
              << ", peak resident tokens=" << peak << " (bound " << bound << ")\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string scene;
    std::string pred;
    std::string out;
    std::string align = "median";
};

int cmd_eval(const EvalArgs& a) {
    WallTimer timer;
    const std::string started = iso_now();
    const auto mode = sp::eval::depth_align_parse(a.align);

    sp::gen::SceneReader reader(a.scene);
    const int n = reader.n_frames();
    const int res = reader.resolution();
    const fs::path pred_dir(a.pred);

    std::vector<std::vector<float>> depth_pred(n), depth_gt(n);
    std::vector<sp::geo::Mask> masks(n);
    std::vector<sp::geo::CameraPose> traj_pred, traj_gt;
    sp::eval::PointCloud cloud_pred, cloud_gt;

    for (int t = 0; t < n; ++t) {
        auto sf = reader.load_frame(t);
        auto p = sp::gen::read_prediction(pred_dir, t, res, res);

        depth_gt[t] = sf.frame.depth;
        masks[t] = sf.frame.mask;
        depth_pred[t].resize(sf.frame.depth.size());
        for (std::size_t i = 0; i < depth_pred[t].size(); ++i)
            depth_pred[t][i] = p.local.xyz[i * 3 + 2];

        traj_gt.push_back(sf.frame.pose);
        traj_pred.push_back(p.pose);

        auto cg = sp::eval::cloud_from_pointmap(sf.global, sf.frame.mask);
        auto cp = sp::eval::cloud_from_pointmap(p.global, sf.frame.mask);
        auto append = [](sp::eval::PointCloud& dst, const sp::eval::PointCloud& src) {
            dst.points.insert(dst.points.end(), src.points.begin(), src.points.end());
            dst.normals.insert(dst.normals.end(), src.normals.begin(), src.normals.end());
            dst.has_normal.insert(dst.has_normal.end(), src.has_normal.begin(),
                                  src.has_normal.end());
        };
        append(cloud_gt, cg);
        append(cloud_pred, cp);
    }

    const auto dm = sp::eval::depth_metrics(depth_pred, depth_gt, masks, mode);
    const auto pm = sp::eval::pose_metrics(traj_pred, traj_gt);
    const auto rm = sp::eval::recon_metrics(cloud_pred, cloud_gt);

    json out_json{
        {"depth",
         {{"abs_rel", dm.abs_rel},
          {"delta_125", dm.delta_125},
          {"alignment", sp::eval::depth_align_str(dm.alignment)}}},
        {"pose",
         {{"ate", pm.ate},
          {"rpe_trans", pm.rpe_trans},
          {"rpe_rot_deg", pm.rpe_rot},
          {"alignment",
           {{"kind", "sim3-umeyama"},
            {"scale", pm.alignment.s},
            {"t", {pm.alignment.t.x(), pm.alignment.t.y(), pm.alignment.t.z()}}}}}},
        {"recon",
         {{"acc_mean", rm.acc_mean},
          {"acc_median", rm.acc_median},
          {"comp_mean", rm.comp_mean},
          {"comp_median", rm.comp_median},
          {"nc_mean", rm.nc_mean},
          {"nc_median", rm.nc_median},
          {"nc_defined", rm.nc_defined}}},
        {"scene", a.scene},
        {"pred", a.pred},
        {"frames", n}};

    fs::path out_path = a.out.empty() ? pred_dir / "metrics.json" : fs::path(a.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    std::ofstream out(out_path, std::ios::trunc);
    out << out_json.dump(2) << "\n";
    if (!out) throw sp::IoError("eval: cannot write " + out_path.string());

    json cfg_json{{"scene", a.scene}, {"pred", a.pred}, {"out", out_path.string()},
                  {"depth_align", a.align}};
    write_run_manifest(out_path.has_parent_path() ? out_path.parent_path() : fs::path("."),
                       "eval", cfg_json, reader.seed(), started, timer.ms());

    std::printf("abs_rel=%.4f delta<1.25=%.1f%% ate=%.4f rpe_t=%.4f rpe_r=%.2fdeg "
                "acc=%.4f comp=%.4f nc=%.3f\n",
                dm.abs_rel, 100 * dm.delta_125, pm.ate, pm.rpe_trans, pm.rpe_rot, rm.acc_mean,
                rm.comp_mean, rm.nc_mean);
    return 0;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
    std::uint64_t seed = 0;
    int res = 32;
    std::vector<int> n_list{8, 32, 128};
    std::vector<std::string> policies{"causal", "window:5", "fa"};
    std::string out;
};

int cmd_bench(const BenchArgs& a) {
    WallTimer timer;
    const std::string started = iso_now();
    sp::net::ModelConfig mc;
    if (a.res % mc.patch != 0)
        throw sp::ConfigError("bench: res must be divisible by " + std::to_string(mc.patch));
    sp::net::Model<float> model(mc, a.seed);

    int n_max = 2;
    for (int n : a.n_list) {
        if (n < 2) throw sp::ConfigError("bench: frame counts must be >= 2");
        n_max = std::max(n_max, n);
    }

    // same synthetic token workload for every policy; encode cost excluded
    sp::Rng rng(a.seed);
    std::vector<sp::ad::Tensor<float>> tokens;
    tokens.reserve(n_max);
    for (int i = 0; i < n_max; ++i) {
        std::vector<float> rgb(static_cast<std::size_t>(a.res) * a.res * 3);
        for (auto& v : rgb) v = static_cast<float>(rng.uniform());
        tokens.push_back(model.encode(rgb, a.res, a.res));
    }

    json rows = json::array();
    std::printf("%-12s %6s %14s %16s\n", "policy", "N", "total_ms", "mean_frame_ms");
    for (const auto& pstr : a.policies) {
        const auto policy = sp::net::CachePolicy::parse(pstr);
        for (int n : a.n_list) {
            sp::net::StreamSession<float> session(model, policy);
            for (int t = 0; t < n; ++t) session.ingest_tokens(tokens[t]);
            if (policy.kind == sp::net::PolicyKind::FullAttention) session.finalize();

            double total = 0;
            json frames = json::array();
            for (const auto& st : session.stats()) {
                total += st.wall_ms;
                frames.push_back(json{{"t", st.t},
                                      {"attended_tokens", st.attended_tokens},
                                      {"wall_ms", st.wall_ms}});
            }
            const double mean = total / n;
            rows.push_back(json{{"policy", policy.str()},
                                {"n", n},
                                {"total_ms", total},
                                {"mean_frame_ms", mean},
                                {"frames", frames}});
            std::printf("%-12s %6d %14.3f %16.4f\n", policy.str().c_str(), n, total, mean);
        }
    }

    if (!a.out.empty()) {
        const fs::path out_dir(a.out);
        fs::create_directories(out_dir);
        std::ofstream out(out_dir / "bench.json", std::ios::trunc);
        out << rows.dump(2) << "\n";
        if (!out) throw sp::IoError("bench: cannot write bench.json");
        json cfg_json{{"seed", a.seed}, {"res", a.res}, {"n_list", a.n_list},
                      {"policies", a.policies}};
        write_run_manifest(out_dir, "bench", cfg_json, a.seed, started, timer.ms());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming pointmap regression: data, training, inference, evaluation"};
    app.require_subcommand(1);

    ScenegenArgs sg;
    auto* sub_sg = app.add_subcommand("scenegen", "generate synthetic scene directories");
    sub_sg->add_option("--seed", sg.seed, "base seed; scene i uses seed+i");
    sub_sg->add_option("--frames", sg.frames, "frames per scene");
    sub_sg->add_option("--res", sg.res, "square image resolution");
    sub_sg->add_option("--count", sg.count, "number of scenes");
    sub_sg->add_option("--primitives", sg.primitives, "primitive count per scene");
    sub_sg->add_option("--trajectory", sg.trajectory, "orbit | dolly | walk");
    sub_sg->add_flag("--dynamic", sg.dynamic, "move some primitives over time");
    sub_sg->add_flag("--metric", sg.metric, "tag scenes as metric-scale");
    sub_sg->add_option("--focal", sg.focal, "focal length in pixels (0: image width)");
    sub_sg->add_option("--out", sg.out, "output root directory")->required();

    sp::train::TrainConfig tc;
    std::string t_config, t_scenes, t_out, t_scale_mode;
    bool t_resume = false;
    auto* sub_tr = app.add_subcommand("train", "optimize a model on generated scenes");
    sub_tr->add_option("--config", t_config, "JSON config file; flags override it");
    sub_tr->add_option("--scenes", t_scenes, "root holding scene directories")->required();
    sub_tr->add_option("--out", t_out, "run directory for checkpoint and log")->required();
    sub_tr->add_flag("--resume", t_resume, "continue from the run directory state");
    auto* o_steps = sub_tr->add_option("--steps", tc.steps);
    auto* o_lr = sub_tr->add_option("--lr", tc.lr);
    auto* o_batch = sub_tr->add_option("--batch", tc.batch);
    auto* o_fmin = sub_tr->add_option("--frames-min", tc.frames_min);
    auto* o_fmax = sub_tr->add_option("--frames-max", tc.frames_max);
    auto* o_seed = sub_tr->add_option("--seed", tc.seed);
    auto* o_policy = sub_tr->add_option("--policy", tc.policy, "causal | window:K | fa");
    auto* o_alpha = sub_tr->add_option("--alpha", tc.alpha);
    auto* o_lpose = sub_tr->add_option("--lambda-pose", tc.lambda_pose);
    auto* o_ckev = sub_tr->add_option("--ckpt-every", tc.ckpt_every);
    auto* o_warm = sub_tr->add_option("--warmup", tc.warmup_steps);
    auto* o_jit = sub_tr->add_option("--jitter", tc.color_jitter);
    auto* o_early = sub_tr->add_option("--early-stop", tc.early_stop_frac);
    auto* o_smode = sub_tr->add_option("--scale-mode", t_scale_mode, "sequence | frame");
    auto* o_patch = sub_tr->add_option("--patch", tc.model.patch);
    auto* o_width = sub_tr->add_option("--width", tc.model.width);
    auto* o_encd = sub_tr->add_option("--enc-depth", tc.model.enc_depth);
    auto* o_decd = sub_tr->add_option("--dec-depth", tc.model.dec_depth);
    auto* o_heads = sub_tr->add_option("--heads", tc.model.n_heads);

    StreamArgs st;
    auto* sub_st = app.add_subcommand("stream", "run streaming inference over a scene");
    sub_st->add_option("--ckpt", st.ckpt, "model checkpoint")->required();
    sub_st->add_option("--scene", st.scene, "scene directory")->required();
    sub_st->add_option("--policy", st.policy, "causal | window:K | fa");
    sub_st->add_option("--dump-pred", st.dump, "directory for per-frame prediction dumps");
    sub_st->add_option("--stats", st.stats, "CSV of per-frame latency and cache counters");

    EvalArgs ev;
    auto* sub_ev = app.add_subcommand("eval", "score prediction dumps against ground truth");
    sub_ev->add_option("--scene", ev.scene, "scene directory")->required();
    sub_ev->add_option("--pred", ev.pred, "prediction dump directory")->required();
    sub_ev->add_option("--out", ev.out, "metrics.json path (default: <pred>/metrics.json)");
    sub_ev->add_option("--depth-align", ev.align, "median | sequence | none");

    BenchArgs be;
    auto* sub_be = app.add_subcommand("bench", "measure cache-policy scaling");
    sub_be->add_option("--seed", be.seed);
    sub_be->add_option("--res", be.res, "synthetic frame resolution");
    sub_be->add_option("--n-list", be.n_list, "sequence lengths to measure")->delimiter(',');
    sub_be->add_option("--policies", be.policies, "policies to measure");
    sub_be->add_option("--out", be.out, "directory for bench.json");

    int rc = 0;
    sub_sg->callback([&] { rc = cmd_scenegen(sg); });
    sub_tr->callback([&] {
        WallTimer timer;
        const std::string started = iso_now();
        sp::train::TrainConfig cfg;
        if (!t_config.empty()) train_config_apply_json(cfg, load_json_file(t_config));
        auto take = [](CLI::Option* o, auto& dst, const auto& src) {
            if (o->count() > 0) dst = src;
        };
        take(o_steps, cfg.steps, tc.steps);
        take(o_lr, cfg.lr, tc.lr);
        take(o_batch, cfg.batch, tc.batch);
        take(o_fmin, cfg.frames_min, tc.frames_min);
        take(o_fmax, cfg.frames_max, tc.frames_max);
        take(o_seed, cfg.seed, tc.seed);
        take(o_policy, cfg.policy, tc.policy);
        take(o_alpha, cfg.alpha, tc.alpha);
        take(o_lpose, cfg.lambda_pose, tc.lambda_pose);
        take(o_ckev, cfg.ckpt_every, tc.ckpt_every);
        take(o_warm, cfg.warmup_steps, tc.warmup_steps);
        take(o_jit, cfg.color_jitter, tc.color_jitter);
        take(o_early, cfg.early_stop_frac, tc.early_stop_frac);
        take(o_patch, cfg.model.patch, tc.model.patch);
        take(o_width, cfg.model.width, tc.model.width);
        take(o_encd, cfg.model.enc_depth, tc.model.enc_depth);
        take(o_decd, cfg.model.dec_depth, tc.model.dec_depth);
        take(o_heads, cfg.model.n_heads, tc.model.n_heads);
        if (o_smode->count() > 0) {
            if (t_scale_mode == "sequence") cfg.scale_mode = sp::loss::ScaleMode::PerSequence;
            else if (t_scale_mode == "frame") cfg.scale_mode = sp::loss::ScaleMode::PerFrame;
            else throw sp::ConfigError("train: unknown scale mode " + t_scale_mode);
        }
        cfg.validate();

        auto dirs = sp::gen::find_scene_dirs(t_scenes);
        if (dirs.empty()) throw sp::IoError("train: no scene directories under " + t_scenes);
        auto report = sp::train::train(cfg, dirs, t_out, t_resume);
        write_run_manifest(t_out, "train", train_config_to_json(cfg), cfg.seed, started,
                           timer.ms(),
                           json{{"steps_run", report.steps_run},
                                {"final_total", report.final_total},
                                {"final_conf", report.final_conf},
                                {"resume", t_resume}});
        std::printf("trained %d steps: total=%.6f conf=%.6f checkpoint=%s\n", report.steps_run,
                    report.final_total, report.final_conf, report.checkpoint.c_str());
        rc = 0;
    });
    sub_st->callback([&] { rc = cmd_stream(st); });
    sub_ev->callback([&] { rc = cmd_eval(ev); });
    sub_be->callback([&] { rc = cmd_bench(be); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const sp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
