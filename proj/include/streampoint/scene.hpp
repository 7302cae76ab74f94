#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streampoint/geometry.hpp"

namespace streampoint::gen {

// One observation: image, depth, validity and the ground-truth camera.
// rgb is h*w*3 in [0,1], depth is positive wherever mask is set.
struct Frame {
    int h = 0, w = 0;
    std::vector<float> rgb;
    std::vector<float> depth;
    geo::Mask mask;
    geo::CameraPose pose;  // camera-to-world; world = first camera frame
    int t = 0;             // 1-based timestamp

    geo::Pointmap local_pointmap() const;
    geo::Pointmap global_pointmap(const geo::CameraPose& world_from) const;
    geo::Vector2d principal_point() const { return {w / 2.0, h / 2.0}; }
};

struct SceneSequence {
    std::vector<Frame> frames;
    bool metric_scale = false;
    std::uint64_t seed = 0;

    int n_frames() const { return static_cast<int>(frames.size()); }
};

enum class Trajectory { Orbit, Dolly, RandomWalk };

struct SceneConfig {
    int n_frames = 6;
    int resolution = 32;       // square images
    int patch_multiple = 8;    // resolution must divide by this
    int n_primitives = 5;
    Trajectory trajectory = Trajectory::Orbit;
    bool dynamic = false;      // rigid per-frame motion of tagged primitives
    bool metric_scale = false;
    double focal = 0;          // 0 -> resolution (f = image width)

    void validate() const;
};

Trajectory trajectory_from_string(const std::string& s);
std::string trajectory_to_string(Trajectory t);

// Ray-casts a procedural world of textured primitives along a smooth camera
// path. Same (seed, config) always produces identical output. The first
// camera defines the world frame (its pose is the exact identity).
SceneSequence generate_scene(std::uint64_t seed, const SceneConfig& config);

}  // namespace streampoint::gen
