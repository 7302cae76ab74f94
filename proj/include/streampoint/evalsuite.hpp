#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streampoint/geometry.hpp"

namespace streampoint::eval {

enum class DepthAlign { PerFrameMedian, PerSequenceScale, MetricNone };

const char* depth_align_str(DepthAlign a);
DepthAlign depth_align_parse(const std::string& s);

struct DepthMetrics {
    double abs_rel = 0;
    double delta_125 = 0;  // fraction of pixels with max(d'/d, d/d') < 1.25, strict
    DepthAlign alignment = DepthAlign::PerFrameMedian;
};

struct PoseMetrics {
    double ate = 0;        // RMSE of Sim(3)-aligned camera centers
    double rpe_trans = 0;  // mean norm error of consecutive relative translations
    double rpe_rot = 0;    // mean geodesic error of consecutive relative rotations, degrees
    geo::Sim3 alignment;   // the fitted pred -> gt transform
};

struct ReconMetrics {
    double acc_mean = 0, acc_median = 0;    // pred -> nearest gt distance
    double comp_mean = 0, comp_median = 0;  // gt -> nearest pred distance
    double nc_mean = 0, nc_median = 0;      // |n_pred . n_nn| over matched pairs
    bool nc_defined = false;                // false when either cloud lacks normals
};

struct PointCloud {
    std::vector<geo::Vector3d> points;
    std::vector<geo::Vector3d> normals;       // parallel to points, valid iff has_normal
    std::vector<std::uint8_t> has_normal;
};

// Median with the even-count convention (midpoint of the two central values).
double median(std::vector<double> v);

// Depth accuracy over a sequence. Each frame needs at least one valid pixel
// and positive ground truth there. PerFrameMedian rescales predictions by
// median(gt)/median(pred) per frame; PerSequenceScale fits one global scale
// as the median of per-pixel gt/pred ratios; MetricNone compares raw values.
// Non-positive scaled predictions never pass the delta test.
DepthMetrics depth_metrics(const std::vector<std::vector<float>>& pred,
                           const std::vector<std::vector<float>>& gt,
                           const std::vector<geo::Mask>& masks, DepthAlign mode);

// Trajectory accuracy after Sim(3) alignment of camera centers (needs >= 3
// poses, non-collinear). Relative-pose errors are computed over consecutive
// frame pairs; rotation error is alignment-invariant by construction.
PoseMetrics pose_metrics(const std::vector<geo::CameraPose>& pred,
                         const std::vector<geo::CameraPose>& gt);

// Nearest-neighbor cloud comparison. NC compares normals at matched pairs
// where both sides carry one; bitwise-equal normals score exactly 1.
ReconMetrics recon_metrics(const PointCloud& pred, const PointCloud& gt);

// Points at valid pixels; normals from central differences where the four
// grid neighbors are valid too.
PointCloud cloud_from_pointmap(const geo::Pointmap& pm, const geo::Mask& mask);

// Exact nearest neighbor via a uniform grid hash with ring expansion; ties
// break to the lowest index, matching the brute-force scan bit for bit.
std::vector<int> nearest_neighbors(const std::vector<geo::Vector3d>& queries,
                                   const std::vector<geo::Vector3d>& points);
std::vector<int> nearest_neighbors_brute(const std::vector<geo::Vector3d>& queries,
                                         const std::vector<geo::Vector3d>& points);

}  // namespace streampoint::eval
