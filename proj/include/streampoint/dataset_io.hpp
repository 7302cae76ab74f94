#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "streampoint/prediction.hpp"
#include "streampoint/scene.hpp"

namespace streampoint::gen {

// On-disk scene layout, all fixed-format and byte-deterministic:
//   manifest.json                    index + per-file crc32 checksums
//   rgb_%04d.ppm                     binary P6, 8-bit
//   depth_%04d.f32                   little-endian float32, row-major
//   ptmap_local_%04d.f32             h*w*3 float32, channels-last
//   ptmap_global_%04d.f32            h*w*3 float32, channels-last
//   pose_%04d.json                   {"q":[w,x,y,z],"tau":[x,y,z],"f":[fx,fy]}
//   mask_%04d.u8                     one byte per pixel, nonzero = valid
// Frame files are 0-indexed on disk; Frame::t stays 1-based.
void write_scene(const std::filesystem::path& dir, const SceneSequence& seq);

struct StoredFrame {
    Frame frame;
    geo::Pointmap local;   // ground truth as stored
    geo::Pointmap global;
};

// Validates the manifest up front, then loads frames one at a time so a
// streaming consumer never touches files past the frame it asked for.
class SceneReader {
public:
    explicit SceneReader(const std::filesystem::path& dir);

    int n_frames() const { return n_frames_; }
    int resolution() const { return resolution_; }
    bool metric_scale() const { return metric_scale_; }
    std::uint64_t seed() const { return seed_; }

    StoredFrame load_frame(int index) const;  // 0-based
    std::vector<StoredFrame> load_all() const;

private:
    std::filesystem::path dir_;
    int n_frames_ = 0;
    int resolution_ = 0;
    bool metric_scale_ = false;
    std::uint64_t seed_ = 0;
    struct FrameFiles {
        std::string rgb, depth, ptmap_local, ptmap_global, pose, mask;
    };
    std::vector<FrameFiles> files_;
    std::vector<std::pair<std::string, std::uint32_t>> checksums_;

    std::vector<std::uint8_t> read_checked(const std::string& name) const;
};

// True when `dir` holds a scene manifest directly.
bool is_scene_dir(const std::filesystem::path& dir);
// Scene dirs under `root` (itself, or scene_* children), sorted by name.
std::vector<std::filesystem::path> find_scene_dirs(const std::filesystem::path& root);

// Prediction dump, one pair of files per frame, written and flushed before
// the next frame is read:
//   pred_%04d.f32        [X_local | C_local | X_global | C_global] float32
//   pred_pose_%04d.json  same schema as dataset pose files
void write_prediction(const std::filesystem::path& dir, int index, const PointmapPrediction& p);
PointmapPrediction read_prediction(const std::filesystem::path& dir, int index, int h, int w);

// Low-level helpers shared by the formats above.
void write_file_bytes(const std::filesystem::path& p, const void* data, std::size_t len);
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p);
std::vector<std::uint8_t> encode_ppm(const std::vector<float>& rgb, int h, int w);
std::vector<float> decode_ppm(const std::vector<std::uint8_t>& bytes, int* h, int* w);

}  // namespace streampoint::gen
