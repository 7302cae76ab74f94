#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "streampoint/losses.hpp"

namespace streampoint::train {

struct TrainConfig {
    int steps = 1000;
    double lr = 1e-3;
    int batch = 1;
    int frames_min = 4;
    int frames_max = 6;
    std::uint64_t seed = 0;
    std::string policy = "causal";  // decode policy used for the training graph
    double alpha = 0.2;
    double lambda_pose = 1.0;
    int ckpt_every = 0;       // 0: checkpoint only at the end
    int warmup_steps = 100;   // linear lr warmup, then constant
    double color_jitter = 0.1;  // sequence-level per-channel affine strength
    double early_stop_frac = 0;  // stop when conf loss falls below this
                                 // fraction of its initial value; 0 disables
    loss::ScaleMode scale_mode = loss::ScaleMode::PerSequence;
    net::ModelConfig model;

    void validate() const;
};

struct TrainReport {
    int steps_run = 0;
    double initial_conf = 0;  // conf_local + conf_global at the first step
    double final_conf = 0;
    double final_total = 0;
    std::filesystem::path checkpoint;
};

// Contiguous temporal window: uniform scene, uniform length in
// [frames_min, frames_max] (clamped to the scene), uniform start.
struct SampleWindow {
    int scene = 0;
    int start = 0;
    int len = 0;
};
SampleWindow sample_window(Rng& rng, const std::vector<int>& scene_lengths, int frames_min,
                           int frames_max);

// Runs the optimization loop over the scenes, appending one CSV row per step
// (step,total,conf_local,conf_global,pose,wall_ms) to out_dir/train_log.csv
// and writing checkpoint.s3r / optimizer.s3r / trainer_state.json. With
// resume=true all three are loaded back and training continues to
// cfg.steps total, reproducing the unresumed run bit for bit.
TrainReport train(const TrainConfig& cfg, const std::vector<std::filesystem::path>& scene_dirs,
                  const std::filesystem::path& out_dir, bool resume = false);

}  // namespace streampoint::train
