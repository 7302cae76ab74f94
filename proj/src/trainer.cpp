#include "streampoint/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

#include "streampoint/checkpoint.hpp"
#include "streampoint/optimizer.hpp"
#include "streampoint/dataset_io.hpp"

namespace streampoint::train {

using S = float;
using nlohmann::json;

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (lr < 0 || !std::isfinite(lr)) throw ConfigError("train: lr must be >= 0");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (frames_min < 2) throw ConfigError("train: frames_min must be >= 2");
    if (frames_max < frames_min) throw ConfigError("train: frames_max < frames_min");
    if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
    if (ckpt_every < 0) throw ConfigError("train: ckpt_every must be >= 0");
    if (color_jitter < 0 || color_jitter >= 1) throw ConfigError("train: color_jitter in [0,1)");
    if (early_stop_frac < 0 || early_stop_frac >= 1)
        throw ConfigError("train: early_stop_frac in [0,1)");
    net::CachePolicy::parse(policy);
    model.validate();
}

SampleWindow sample_window(Rng& rng, const std::vector<int>& scene_lengths, int frames_min,
                           int frames_max) {
    if (scene_lengths.empty()) throw ContractError("sample_window: no scenes");
    if (frames_min < 2 || frames_max < frames_min)
        throw ContractError("sample_window: bad frame range");
    SampleWindow w;
    w.scene = static_cast<int>(rng.uniform_index(scene_lengths.size()));
    const int n = scene_lengths[w.scene];
    if (n < 2) throw ContractError("sample_window: scene shorter than 2 frames");
    const int want = frames_min + static_cast<int>(rng.uniform_index(
                                      static_cast<std::size_t>(frames_max - frames_min + 1)));
    w.len = std::min(want, n);
    w.start = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(n - w.len + 1)));
    return w;
}

namespace {

struct SceneCache {
    int h = 0, w = 0;
    bool metric = false;
    std::vector<gen::StoredFrame> frames;
};

struct JitterParams {
    float scale[3] = {1, 1, 1};
    float bias[3] = {0, 0, 0};
};

JitterParams draw_jitter(Rng& rng, double strength) {
    JitterParams j;
    if (strength <= 0) return j;
    for (int c = 0; c < 3; ++c)
        j.scale[c] = static_cast<float>(rng.uniform(1 - strength, 1 + strength));
    for (int c = 0; c < 3; ++c)
        j.bias[c] = static_cast<float>(rng.uniform(-strength / 2, strength / 2));
    return j;
}

std::vector<float> apply_jitter(const std::vector<float>& rgb, const JitterParams& j) {
    std::vector<float> out(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const int c = static_cast<int>(i % 3);
        out[i] = std::clamp(rgb[i] * j.scale[c] + j.bias[c], 0.f, 1.f);
    }
    return out;
}

// Ground truth for one window frame, re-expressed so the window's first
// frame is the world anchor (exact identity there).
loss::FrameLossInput<S> make_loss_input(const net::FramePredictionGraph<S>& g,
                                        const gen::StoredFrame& sf,
                                        const geo::CameraPose& anchor) {
    const auto& fr = sf.frame;
    const std::int64_t r = static_cast<std::int64_t>(fr.h) * fr.w;

    loss::FrameLossInput<S> in;
    in.pred_local = ad::reshape(g.local.xyz, {static_cast<int>(r), 3});
    in.conf_local = g.local.conf;
    in.pred_global = ad::reshape(g.global.xyz, {static_cast<int>(r), 3});
    in.conf_global = g.global.conf;
    in.pose = g.pose;

    in.gt_local = ad::Tensor<S>::from_data({static_cast<int>(r), 3}, sf.local.xyz);
    geo::Pointmap gt_global = geo::local_to_global(sf.local, fr.pose, anchor);
    in.gt_global = ad::Tensor<S>::from_data({static_cast<int>(r), 3}, std::move(gt_global.xyz));

    std::vector<S> m(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) m[i] = fr.mask[i] ? S(1) : S(0);
    in.mask = ad::Tensor<S>::from_data({static_cast<int>(r)}, std::move(m));

    in.gt_pose = geo::relative_pose(anchor, fr.pose);
    return in;
}

void save_optimizer(const std::filesystem::path& path, const ad::AdamW<S>& opt,
                    const net::ParamStore<S>& ps) {
    net::TensorArchive a;
    a.meta = json{{"kind", "optimizer"}, {"t", opt.step_count()}};
    for (std::size_t k = 0; k < ps.entries.size(); ++k) {
        const auto& [name, t] = ps.entries[k];
        net::ArchiveEntry m, v;
        m.name = "m." + name;
        v.name = "v." + name;
        m.shape = v.shape = t.shape();
        m.data = opt.moment1()[k];
        v.data = opt.moment2()[k];
        a.entries.push_back(std::move(m));
        a.entries.push_back(std::move(v));
    }
    net::write_archive(path, a);
}

void load_optimizer(const std::filesystem::path& path, ad::AdamW<S>& opt,
                    const net::ParamStore<S>& ps) {
    net::TensorArchive a = net::read_archive(path);
    if (a.meta.value("kind", "") != "optimizer")
        throw FormatError("optimizer state: wrong archive kind");
    const auto t = a.meta.at("t").get<std::int64_t>();
    auto pick = [&](const std::string& name) -> std::vector<S> {
        for (const auto& e : a.entries)
            if (e.name == name) return e.data;
        throw FormatError("optimizer state: missing entry " + name);
    };
    std::vector<std::vector<S>> m, v;
    m.reserve(ps.entries.size());
    v.reserve(ps.entries.size());
    for (const auto& [name, tensor] : ps.entries) {
        m.push_back(pick("m." + name));
        v.push_back(pick("v." + name));
    }
    opt.restore(t, std::move(m), std::move(v));
}

}  // namespace

TrainReport train(const TrainConfig& cfg, const std::vector<std::filesystem::path>& scene_dirs,
                  const std::filesystem::path& out_dir, bool resume) {
    cfg.validate();
    if (scene_dirs.empty()) throw ContractError("train: no scene directories");
    std::filesystem::create_directories(out_dir);

    std::vector<SceneCache> scenes;
    scenes.reserve(scene_dirs.size());
    for (const auto& dir : scene_dirs) {
        gen::SceneReader reader(dir);
        SceneCache c;
        c.metric = reader.metric_scale();
        c.frames = reader.load_all();
        c.h = c.frames[0].frame.h;
        c.w = c.frames[0].frame.w;
        if (!scenes.empty() && (c.h != scenes[0].h || c.w != scenes[0].w))
            throw ConfigError("train: scenes have mixed resolutions");
        scenes.push_back(std::move(c));
    }
    const int h = scenes[0].h, w = scenes[0].w;
    if (h % cfg.model.patch != 0 || w % cfg.model.patch != 0)
        throw ConfigError("train: resolution not divisible by patch size");
    std::vector<int> lengths;
    for (const auto& c : scenes) lengths.push_back(static_cast<int>(c.frames.size()));

    const auto policy = net::CachePolicy::parse(cfg.policy);
    const auto ckpt_path = out_dir / "checkpoint.s3r";
    const auto opt_path = out_dir / "optimizer.s3r";
    const auto state_path = out_dir / "trainer_state.json";
    const auto csv_path = out_dir / "train_log.csv";

    net::ModelConfig mc = cfg.model;
    mc.alpha = cfg.alpha;

    Rng rng(cfg.seed);
    int start_step = 0;
    double initial_conf = 0;

    std::optional<net::Model<S>> model;
    if (resume) {
        model.emplace(net::load_model<S>(ckpt_path));
        std::ifstream in(state_path);
        if (!in) throw IoError("train: cannot open " + state_path.string());
        json st = json::parse(in);
        start_step = st.at("step").get<int>();
        initial_conf = st.at("initial_conf").get<double>();
        rng.set_state(st.at("rng_state").get<std::uint64_t>());
    } else {
        model.emplace(mc, cfg.seed);
    }

    typename ad::AdamW<S>::Hyper hyper;
    hyper.lr = static_cast<S>(cfg.lr);
    ad::AdamW<S> opt(model->params.tensors(), hyper);
    if (resume) load_optimizer(opt_path, opt, model->params);

    std::ofstream csv;
    if (resume && std::filesystem::exists(csv_path)) {
        csv.open(csv_path, std::ios::app);
    } else {
        csv.open(csv_path, std::ios::trunc);
        csv << "step,total,conf_local,conf_global,pose,wall_ms\n";
    }
    if (!csv) throw IoError("train: cannot open " + csv_path.string());

    auto save_all = [&](int step_now) {
        net::save_model(ckpt_path, *model);
        save_optimizer(opt_path, opt, model->params);
        json st{{"step", step_now},
                {"rng_state", rng.state()},
                {"initial_conf", initial_conf}};
        std::ofstream out(state_path, std::ios::trunc);
        out << st.dump(2) << "\n";
        if (!out) throw IoError("train: cannot write " + state_path.string());
    };

    TrainReport report;
    report.checkpoint = ckpt_path;

    const S lambda = static_cast<S>(cfg.lambda_pose);
    const S alpha = static_cast<S>(cfg.alpha);

    for (int step = start_step + 1; step <= cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        ad::Tensor<S> batch_total;
        double conf_local = 0, conf_global = 0, pose = 0;
        {
            ad::Tape<S> tape;
            for (int b = 0; b < cfg.batch; ++b) {
                SampleWindow win = sample_window(rng, lengths, cfg.frames_min, cfg.frames_max);
                const SceneCache& sc = scenes[win.scene];
                JitterParams jit = draw_jitter(rng, cfg.color_jitter);

                std::vector<ad::Tensor<S>> tokens;
                tokens.reserve(win.len);
                for (int j = 0; j < win.len; ++j) {
                    auto rgb = apply_jitter(sc.frames[win.start + j].frame.rgb, jit);
                    tokens.push_back(model->encode(rgb, h, w));
                }
                auto pyrs = net::batched_decode(*model, tokens, policy);

                const geo::CameraPose& anchor = sc.frames[win.start].frame.pose;
                std::vector<loss::FrameLossInput<S>> inputs;
                inputs.reserve(win.len);
                for (int j = 0; j < win.len; ++j) {
                    auto g = net::predict_frame(*model, pyrs[j], h / mc.patch, w / mc.patch);
                    inputs.push_back(make_loss_input(g, sc.frames[win.start + j], anchor));
                }
                auto rep = loss::total_loss(inputs, alpha, lambda, sc.metric,
                                            static_cast<double>(w), cfg.scale_mode);
                batch_total = batch_total.defined() ? ad::add(batch_total, rep.total)
                                                    : rep.total;
                conf_local += rep.conf_local;
                conf_global += rep.conf_global;
                pose += rep.pose;
            }
            if (cfg.batch > 1) batch_total = ad::scale(batch_total, S(1) / cfg.batch);
            tape.backward(batch_total);
        }
        conf_local /= cfg.batch;
        conf_global /= cfg.batch;
        pose /= cfg.batch;
        const double total = static_cast<double>(batch_total.item());
        if (!std::isfinite(total))
            throw ContractError("train: non-finite loss at step " + std::to_string(step));

        for (const auto& [name, t] : model->params.entries)
            if (!t.grad_touched())
                throw ContractError("train: parameter received no gradient: " + name);

        const S lr_mult = cfg.warmup_steps > 0
                              ? std::min(S(1), static_cast<S>(step) / cfg.warmup_steps)
                              : S(1);
        opt.step(lr_mult);
        opt.zero_grad();

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        char row[256];
        std::snprintf(row, sizeof(row), "%d,%.17g,%.17g,%.17g,%.17g,%.3f\n", step, total,
                      conf_local, conf_global, pose, wall_ms);
        csv << row;
        csv.flush();

        if (step == 1) initial_conf = conf_local + conf_global;
        report.steps_run = step - start_step;
        report.final_conf = conf_local + conf_global;
        report.final_total = total;

        if (cfg.ckpt_every > 0 && step % cfg.ckpt_every == 0 && step != cfg.steps)
            save_all(step);
        if (cfg.early_stop_frac > 0 && initial_conf > 0 &&
            report.final_conf < cfg.early_stop_frac * initial_conf) {
            save_all(step);
            report.initial_conf = initial_conf;
            return report;
        }
    }

    save_all(std::max(cfg.steps, start_step));
    report.initial_conf = initial_conf;
    return report;
}

}  // namespace streampoint::train
