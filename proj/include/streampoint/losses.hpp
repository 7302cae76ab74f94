#pragma once

#include <optional>
#include <vector>

#include "streampoint/heads.hpp"

namespace streampoint::loss {

using ad::Tensor;

// Scale normalizers for one sequence. s_gt comes from ground truth; s_pred
// from the predictions, except in metric mode where it is the same node as
// s_gt (no normalization of predicted geometry relative to truth).
template <typename S>
struct NormScale {
    Tensor<S> s_gt;
    Tensor<S> s_pred;
    bool metric = false;
};

// Mean Euclidean norm over valid pixels: homogeneous of degree 1 in the
// points. points [R x 3], mask [R] of 0/1. No valid pixels is degenerate.
template <typename S>
Tensor<S> scale_factor(const Tensor<S>& points, const Tensor<S>& mask) {
    if (points.ndim() != 2 || points.dim(1) != 3) throw ShapeError("scale_factor: want [R x 3]");
    if (mask.size() != points.dim(0)) throw ShapeError("scale_factor: mask size");
    S count = S(0);
    for (std::int64_t i = 0; i < mask.size(); ++i) count += mask.data()[i];
    if (!(count > 0)) throw DegenerateError("scale_factor: no valid pixels");
    return ad::scale(ad::sum(ad::mul(ad::rows_l2norm(points), mask)), S(1) / count);
}

template <typename S>
NormScale<S> make_norm_scale(const Tensor<S>& gt_points, const Tensor<S>& pred_points,
                             const Tensor<S>& mask, bool metric) {
    NormScale<S> ns;
    ns.metric = metric;
    ns.s_gt = scale_factor(gt_points, mask);
    if (!(ns.s_gt.item() > S(0)))
        throw DegenerateError("make_norm_scale: ground-truth scale is zero");
    ns.s_pred = metric ? ns.s_gt : scale_factor(pred_points, mask);
    if (!(ns.s_pred.item() > S(0)))
        throw DegenerateError("make_norm_scale: predicted scale is zero");
    return ns;
}

// Confidence-weighted regression, summed over valid pixels:
//   sum_i c_i * || x̂_i/ŝ - x_i/s ||_2  -  alpha * log c_i
// Residual is the Euclidean norm, not its square. Confidence must be
// positive (log throws otherwise).
template <typename S>
Tensor<S> conf_loss(const Tensor<S>& pred, const Tensor<S>& conf, const Tensor<S>& gt,
                    const Tensor<S>& mask, const NormScale<S>& ns, S alpha) {
    if (pred.shape() != gt.shape()) throw ShapeError("conf_loss: pred/gt shape mismatch");
    if (conf.size() != pred.dim(0) || mask.size() != pred.dim(0))
        throw ShapeError("conf_loss: conf/mask size mismatch");
    for (std::int64_t i = 0; i < conf.size(); ++i)
        if (!(conf.data()[i] > S(0))) throw ContractError("conf_loss: non-positive confidence");
    auto r = ad::rows_l2norm(ad::sub(ad::div_by_scalar(pred, ns.s_pred),
                                     ad::div_by_scalar(gt, ns.s_gt)));
    auto term = ad::sub(ad::mul(conf, r), ad::scale(ad::log_op(conf), alpha));
    return ad::sum(ad::mul(term, mask));
}

// || q̂ - q ||  +  || taû/ŝ - tau/s ||  +  || f̂ - f || with focals
// normalized by the image width. Ground-truth quaternion is already
// canonical, prediction is canonicalized by the head, so q and -q agree.
template <typename S>
Tensor<S> pose_loss(const net::PoseOut<S>& pred, const geo::CameraPose& gt,
                    const NormScale<S>& ns, double f_base) {
    if (!(f_base > 0)) throw ContractError("pose_loss: f_base must be positive");
    Tensor<S> q_gt = Tensor<S>::from_data(
        {4}, {static_cast<S>(gt.q.w), static_cast<S>(gt.q.x), static_cast<S>(gt.q.y),
              static_cast<S>(gt.q.z)});
    Tensor<S> tau_gt = Tensor<S>::from_data(
        {1, 3}, {static_cast<S>(gt.tau.x()), static_cast<S>(gt.tau.y()),
                 static_cast<S>(gt.tau.z())});
    Tensor<S> f_gt = Tensor<S>::from_data(
        {1, 2},
        {static_cast<S>(gt.f.x() / f_base), static_cast<S>(gt.f.y() / f_base)});
    auto term_q = ad::l2norm(ad::sub(pred.q, q_gt));
    auto term_tau = ad::l2norm(ad::sub(ad::div_by_scalar(pred.tau, ns.s_pred),
                                       ad::div_by_scalar(tau_gt, ns.s_gt)));
    auto term_f = ad::l2norm(ad::sub(pred.f_norm, f_gt));
    return ad::add(ad::add(term_q, term_tau), term_f);
}

enum class ScaleMode { PerSequence, PerFrame };

// Everything the loss needs for one frame. Ground-truth tensors are
// constants; prediction tensors carry the graph.
template <typename S>
struct FrameLossInput {
    Tensor<S> pred_local;   // [R x 3]
    Tensor<S> conf_local;   // [R]
    Tensor<S> pred_global;  // [R x 3]
    Tensor<S> conf_global;  // [R]
    net::PoseOut<S> pose;
    Tensor<S> gt_local;     // [R x 3]
    Tensor<S> gt_global;    // [R x 3]
    Tensor<S> mask;         // [R]
    geo::CameraPose gt_pose;
};

template <typename S>
struct LossReport {
    Tensor<S> total;  // scalar, differentiable
    double conf_local = 0;
    double conf_global = 0;
    double pose = 0;
    double valid_pixels = 0;
};

// Sequence loss: confidence terms for both branches normalized by the total
// valid-pixel count, plus lambda_pose times the mean per-frame pose loss.
// Scale normalizers come from the global maps (shared by both branches and
// the translation term).
template <typename S>
LossReport<S> total_loss(const std::vector<FrameLossInput<S>>& frames, S alpha, S lambda_pose,
                         bool metric, double f_base, ScaleMode mode = ScaleMode::PerSequence) {
    if (frames.empty()) throw ContractError("total_loss: no frames");
    std::optional<NormScale<S>> seq_ns;
    if (mode == ScaleMode::PerSequence) {
        std::vector<Tensor<S>> gts, preds, masks;
        for (const auto& f : frames) {
            gts.push_back(f.gt_global);
            preds.push_back(f.pred_global);
            masks.push_back(ad::reshape(f.mask, {static_cast<int>(f.mask.size()), 1}));
        }
        auto mask_all = ad::concat_rows(masks);
        seq_ns = make_norm_scale(
            ad::concat_rows(gts), ad::concat_rows(preds),
            ad::reshape(mask_all, {static_cast<int>(mask_all.size())}), metric);
    }

    Tensor<S> conf_local_sum, conf_global_sum, pose_sum;
    S total_valid = S(0);
    for (const auto& f : frames) {
        NormScale<S> ns = seq_ns ? *seq_ns
                                 : make_norm_scale(f.gt_global, f.pred_global, f.mask, metric);
        auto cl = conf_loss(f.pred_local, f.conf_local, f.gt_local, f.mask, ns, alpha);
        auto cg = conf_loss(f.pred_global, f.conf_global, f.gt_global, f.mask, ns, alpha);
        auto pl = pose_loss(f.pose, f.gt_pose, ns, f_base);
        conf_local_sum = conf_local_sum.defined() ? ad::add(conf_local_sum, cl) : cl;
        conf_global_sum = conf_global_sum.defined() ? ad::add(conf_global_sum, cg) : cg;
        pose_sum = pose_sum.defined() ? ad::add(pose_sum, pl) : pl;
        for (std::int64_t i = 0; i < f.mask.size(); ++i) total_valid += f.mask.data()[i];
    }
    if (!(total_valid > 0)) throw DegenerateError("total_loss: no valid pixels");

    auto conf_local_n = ad::scale(conf_local_sum, S(1) / total_valid);
    auto conf_global_n = ad::scale(conf_global_sum, S(1) / total_valid);
    auto pose_mean = ad::scale(pose_sum, S(1) / static_cast<S>(frames.size()));

    LossReport<S> rep;
    rep.total = ad::add(ad::add(conf_local_n, conf_global_n),
                        ad::scale(pose_mean, lambda_pose));
    rep.conf_local = static_cast<double>(conf_local_n.item());
    rep.conf_global = static_cast<double>(conf_global_n.item());
    rep.pose = static_cast<double>(pose_mean.item());
    rep.valid_pixels = static_cast<double>(total_valid);
    if (!std::isfinite(rep.conf_local) || !std::isfinite(rep.conf_global) ||
        !std::isfinite(rep.pose))
        throw ContractError("total_loss: non-finite loss component");
    return rep;
}

}  // namespace streampoint::loss
