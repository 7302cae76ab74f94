#pragma once

#include <cmath>
#include <vector>

#include "streampoint/decoder.hpp"
#include "streampoint/prediction.hpp"

namespace streampoint::net {

// Graph-side output of one pointmap head: points {H,W,3} and confidence {HW}
// with c = 1 + exp(raw) > 1 strictly (raw is clamped to [-15, 30] so the
// float sum never rounds down to exactly 1).
template <typename S>
struct PointmapOut {
    ad::Tensor<S> xyz;   // {H, W, 3}
    ad::Tensor<S> conf;  // {H*W}
};

template <typename S>
struct PoseOut {
    ad::Tensor<S> q;       // {4} unit, w >= 0
    ad::Tensor<S> tau;     // {1, 3}
    ad::Tensor<S> f_norm;  // {1, 2}, focal / f_base, positive
};

// Reads the pyramid at its midpoint and final layer, projects each token to
// a p*p*4 patch, unshuffles to image layout and refines with two 3x3 convs
// (residual). Channel 3 carries the raw confidence.
template <typename S>
PointmapOut<S> head_pointmap(const PointHeadP<S>& head, const ModelConfig& cfg,
                             const Pyramid<S>& pyramid, int gh, int gw) {
    if (static_cast<int>(pyramid.size()) != cfg.dec_depth + 1)
        throw ShapeError("head_pointmap: pyramid depth mismatch");
    const auto& mid = pyramid[cfg.dec_depth / 2];
    const auto& top = pyramid[cfg.dec_depth];
    auto feat = ad::concat_cols(mid, top);                       // [K x 2C]
    auto raw = linear(feat, head.proj);                          // [K x p*p*4]
    auto img = ad::pixel_unshuffle(raw, gh, gw, cfg.patch, 4);   // {H,W,4}
    auto hidden = ad::gelu(ad::conv3x3(img, head.conv1.w, head.conv1.b));
    auto refined = ad::add(img, ad::conv3x3(hidden, head.conv2.w, head.conv2.b));
    const int h = gh * cfg.patch, w = gw * cfg.patch;
    PointmapOut<S> out;
    out.xyz = ad::slice_channels(refined, 0, 3);
    auto raw_conf = ad::reshape(ad::slice_channels(refined, 3, 4), {h * w});
    out.conf = ad::add_scalar(ad::exp_clamped(raw_conf, S(30), S(-15)), S(1));
    return out;
}

// Mean-pools the final decoder features and regresses 9 values: quaternion
// (normalized, sign-canonical), translation, and log focal (f = f_base *
// exp(raw), so zero weights give exactly f_base).
template <typename S>
PoseOut<S> head_pose(const PoseHeadP<S>& head, const Pyramid<S>& pyramid, int dec_depth) {
    if (static_cast<int>(pyramid.size()) != dec_depth + 1)
        throw ShapeError("head_pose: pyramid depth mismatch");
    auto pooled = ad::mean_over_rows(pyramid[dec_depth]);  // [1 x C]
    auto raw = linear(ad::gelu(linear(pooled, head.fc1)), head.fc2);  // [1 x 9]
    PoseOut<S> out;
    out.q = ad::quat_normalize(ad::reshape(ad::slice_cols(raw, 0, 4), {4}));
    out.tau = ad::slice_cols(raw, 4, 7);
    out.f_norm = ad::exp_clamped(ad::slice_cols(raw, 7, 9));
    return out;
}

template <typename S>
struct FramePredictionGraph {
    PointmapOut<S> local;
    PointmapOut<S> global;
    PoseOut<S> pose;
};

template <typename S>
FramePredictionGraph<S> predict_frame(const Model<S>& model, const Pyramid<S>& pyramid, int gh,
                                      int gw) {
    FramePredictionGraph<S> out;
    out.local = head_pointmap(model.head_local, model.cfg, pyramid, gh, gw);
    out.global = head_pointmap(model.head_global, model.cfg, pyramid, gh, gw);
    out.pose = head_pose(model.head_pose, pyramid, model.cfg.dec_depth);
    return out;
}

// Drops the graph and produces the serializable record. f_base is the image
// width in pixels.
template <typename S>
PointmapPrediction materialize_prediction(const FramePredictionGraph<S>& g, double f_base) {
    const int h = g.local.xyz.dim(0), w = g.local.xyz.dim(1);
    PointmapPrediction p;
    p.local = geo::Pointmap(h, w, geo::PointmapRef::Local);
    p.global = geo::Pointmap(h, w, geo::PointmapRef::Global);
    for (std::size_t i = 0; i < p.local.xyz.size(); ++i) {
        p.local.xyz[i] = static_cast<float>(g.local.xyz.data()[i]);
        p.global.xyz[i] = static_cast<float>(g.global.xyz.data()[i]);
    }
    p.conf_local.resize(static_cast<std::size_t>(h) * w);
    p.conf_global.resize(p.conf_local.size());
    for (std::size_t i = 0; i < p.conf_local.size(); ++i) {
        p.conf_local[i] = static_cast<float>(g.local.conf.data()[i]);
        p.conf_global[i] = static_cast<float>(g.global.conf.data()[i]);
    }
    const auto* q = g.pose.q.data();
    const auto* tau = g.pose.tau.data();
    const auto* fn = g.pose.f_norm.data();
    p.pose = geo::CameraPose(
        geo::Quat::from_wxyz(q[0], q[1], q[2], q[3]),
        geo::Vector3d(tau[0], tau[1], tau[2]),
        geo::Vector2d(f_base * fn[0], f_base * fn[1]));
    p.validate();
    return p;
}

}  // namespace streampoint::net
