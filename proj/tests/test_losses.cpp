#include <doctest.h>

#include "streampoint/losses.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace streampoint;
using T = ad::Tensor<double>;
using loss::FrameLossInput;
using loss::ScaleMode;

namespace {

net::PoseOut<double> make_pose_out(std::vector<double> q, std::vector<double> tau,
                                   std::vector<double> f_norm) {
    net::PoseOut<double> p;
    p.q = ad::quat_normalize(T::from_data({4}, std::move(q)));
    p.tau = T::from_data({1, 3}, std::move(tau));
    p.f_norm = T::from_data({1, 2}, std::move(f_norm));
    return p;
}

T rand_points(Rng& r, int n, double lo = -1, double hi = 1) {
    std::vector<double> v(static_cast<std::size_t>(n) * 3);
    for (auto& x : v) x = r.uniform(lo, hi);
    return T::from_data({n, 3}, std::move(v));
}

T ones(int n) { return T::from_data({n}, std::vector<double>(n, 1.0)); }

// frame whose prediction equals its ground truth everywhere
FrameLossInput<double> perfect_frame(Rng& r, int n_pix, double f_base) {
    FrameLossInput<double> f;
    auto pts = rand_points(r, n_pix, 0.5, 2.0);
    f.gt_local = pts;
    f.pred_local = T::from_data(pts.shape(), pts.val());
    auto gpts = rand_points(r, n_pix, 0.5, 2.0);
    f.gt_global = gpts;
    f.pred_global = T::from_data(gpts.shape(), gpts.val());
    f.conf_local = ones(n_pix);
    f.conf_global = ones(n_pix);
    f.mask = ones(n_pix);
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d::Zero(),
                                geo::Vector2d(f_base, f_base));
    f.pose = make_pose_out({1, 0, 0, 0}, {0, 0, 0}, {1, 1});
    return f;
}

}  // namespace

TEST_CASE("scale factor is the masked mean point norm") {
    SUBCASE("all points at distance two") {
        auto pts = T::from_data({3, 3}, {2, 0, 0, 0, 2, 0, 0, 0, 2});
        CHECK(loss::scale_factor(pts, ones(3)).item() == 2.0);
    }
    SUBCASE("degree-one homogeneity") {
        Rng r(1);
        auto pts = rand_points(r, 20);
        auto s1 = loss::scale_factor(pts, ones(20)).item();
        std::vector<double> scaled(pts.val());
        for (auto& v : scaled) v *= 3.5;
        auto s2 = loss::scale_factor(T::from_data({20, 3}, std::move(scaled)), ones(20)).item();
        CHECK(s2 == doctest::Approx(3.5 * s1).epsilon(1e-12));
    }
    SUBCASE("masked rows are excluded, brute force agrees") {
        Rng r(2);
        auto pts = rand_points(r, 17);
        std::vector<double> mk(17);
        for (auto& m : mk) m = r.uniform() < 0.6 ? 1.0 : 0.0;
        mk[0] = 1.0;
        double want = 0, cnt = 0;
        for (int i = 0; i < 17; ++i) {
            if (mk[i] == 0.0) continue;
            const double* p = pts.val().data() + i * 3;
            want += std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            cnt += 1;
        }
        want /= cnt;
        auto got = loss::scale_factor(pts, T::from_data({17}, std::move(mk))).item();
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
    SUBCASE("guards") {
        Rng r(3);
        auto pts = rand_points(r, 4);
        CHECK_THROWS_AS(loss::scale_factor(pts, T::from_data({4}, {0, 0, 0, 0})),
                        DegenerateError);
        CHECK_THROWS_AS(loss::scale_factor(T::from_data({4, 2}, std::vector<double>(8, 1.0)),
                                           ones(4)),
                        ShapeError);
        CHECK_THROWS_AS(loss::scale_factor(pts, ones(3)), ShapeError);
        // all-zero geometry has no usable scale
        auto zero_pts = T::from_data({4, 3}, std::vector<double>(12, 0.0));
        CHECK_THROWS_AS(loss::make_norm_scale(zero_pts, pts, ones(4), false), DegenerateError);
    }
}

TEST_CASE("confidence term: hand-computed single pixel") {
    // c = 2, residual 0.5, alpha = 0.2  ->  2*0.5 - 0.2*ln 2
    const double f_base = 100.0;
    FrameLossInput<double> f;
    f.gt_global = T::from_data({1, 3}, {1, 0, 0});
    f.pred_global = T::from_data({1, 3}, {1, 0, 0});  // scales: s = s_hat = 1
    f.gt_local = T::from_data({1, 3}, {1, 0, 0});
    f.pred_local = T::from_data({1, 3}, {1.5, 0, 0});
    f.conf_local = T::from_data({1}, {2.0});
    f.conf_global = ones(1);
    f.mask = ones(1);
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d::Zero(),
                                geo::Vector2d(f_base, f_base));
    f.pose = make_pose_out({1, 0, 0, 0}, {0, 0, 0}, {1, 1});

    auto rep = loss::total_loss<double>({f}, 0.2, 1.0, false, f_base);
    CHECK(rep.conf_local == doctest::Approx(0.8613705638880109).epsilon(1e-14));
    CHECK(rep.conf_global == 0.0);
    CHECK(rep.pose == 0.0);
    CHECK(rep.total.item() == doctest::Approx(0.8613705638880109).epsilon(1e-14));
    CHECK(rep.valid_pixels == 1.0);
}

TEST_CASE("perfect prediction with unit confidence scores exactly zero") {
    Rng r(4);
    auto f = perfect_frame(r, 6, 64.0);
    auto rep = loss::total_loss<double>({f}, 0.2, 1.0, false, 64.0);
    CHECK(rep.total.item() == 0.0);
    CHECK(rep.conf_local == 0.0);
    CHECK(rep.conf_global == 0.0);
    CHECK(rep.pose == 0.0);
}

TEST_CASE("pose translation term normalizes by the scene scale") {
    const double f_base = 64.0;
    FrameLossInput<double> f;
    auto pts = T::from_data({3, 3}, {2, 0, 0, 0, 2, 0, 0, 0, 2});  // s = 2
    f.gt_global = pts;
    f.pred_global = T::from_data(pts.shape(), pts.val());
    f.gt_local = pts;
    f.pred_local = T::from_data(pts.shape(), pts.val());
    f.conf_local = ones(3);
    f.conf_global = ones(3);
    f.mask = ones(3);
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d(1, 0, 0),
                                geo::Vector2d(f_base, f_base));
    f.pose = make_pose_out({1, 0, 0, 0}, {0, 0, 0}, {1, 1});

    auto rep = loss::total_loss<double>({f}, 0.2, 1.0, false, f_base);
    CHECK(rep.pose == 0.5);  // ||0/2 - (1,0,0)/2||
    CHECK(rep.conf_local == 0.0);
    CHECK(rep.total.item() == 0.5);

    // lambda_pose scales just that term
    auto rep3 = loss::total_loss<double>({f}, 0.2, 3.0, false, f_base);
    CHECK(rep3.total.item() == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("negated quaternion costs nothing after canonicalization") {
    Rng r(5);
    auto f = perfect_frame(r, 4, 32.0);
    f.gt_pose.q = geo::Quat::from_wxyz(0.9, 0.1, 0.2, 0.3);
    f.pose.q = ad::quat_normalize(T::from_data({4}, {-0.9, -0.1, -0.2, -0.3}));
    auto rep = loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0);
    CHECK(rep.pose == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("non-metric loss ignores a global rescale of the ground truth") {
    Rng r(6);
    auto build = [&](double lambda) {
        Rng rr(77);  // same scene every call
        std::vector<FrameLossInput<double>> frames;
        for (int t = 0; t < 2; ++t) {
            FrameLossInput<double> f;
            auto gl = rand_points(rr, 5, 0.5, 2.0);
            auto gg = rand_points(rr, 5, 0.5, 2.0);
            std::vector<double> gl2(gl.val()), gg2(gg.val());
            for (auto& v : gl2) v *= lambda;
            for (auto& v : gg2) v *= lambda;
            f.gt_local = T::from_data({5, 3}, std::move(gl2));
            f.gt_global = T::from_data({5, 3}, std::move(gg2));
            f.pred_local = rand_points(rr, 5, 0.5, 2.0);
            f.pred_global = rand_points(rr, 5, 0.5, 2.0);
            std::vector<double> cl(5), cg(5);
            for (auto& c : cl) c = rr.uniform(1.1, 3.0);
            for (auto& c : cg) c = rr.uniform(1.1, 3.0);
            f.conf_local = T::from_data({5}, std::move(cl));
            f.conf_global = T::from_data({5}, std::move(cg));
            f.mask = ones(5);
            f.gt_pose = geo::CameraPose(geo::Quat::from_wxyz(0.8, 0.2, 0.1, 0.4),
                                        lambda * geo::Vector3d(0.3, -0.2, 0.5),
                                        geo::Vector2d(40, 42));
            f.pose = make_pose_out({0.7, 0.3, 0.2, 0.1}, {0.1, 0.2, -0.1}, {0.9, 1.1});
            frames.push_back(std::move(f));
        }
        return frames;
    };

    auto base = loss::total_loss<double>(build(1.0), 0.2, 1.0, false, 32.0);
    for (double lambda : {0.1, 3.0, 42.0}) {
        auto scaled = loss::total_loss<double>(build(lambda), 0.2, 1.0, false, 32.0);
        CHECK(scaled.total.item() ==
              doctest::Approx(base.total.item()).epsilon(1e-9));
        CHECK(scaled.conf_local == doctest::Approx(base.conf_local).epsilon(1e-9));
        CHECK(scaled.conf_global == doctest::Approx(base.conf_global).epsilon(1e-9));
        CHECK(scaled.pose == doctest::Approx(base.pose).epsilon(1e-9));
    }

    // metric mode must feel the rescale
    auto m1 = loss::total_loss<double>(build(1.0), 0.2, 1.0, true, 32.0);
    auto m3 = loss::total_loss<double>(build(3.0), 0.2, 1.0, true, 32.0);
    CHECK(std::abs(m1.total.item() - m3.total.item()) > 1e-3);
    (void)r;
}

TEST_CASE("metric mode pins the prediction scale to the truth") {
    Rng r(7);
    auto gt = rand_points(r, 8, 0.5, 2.0);
    std::vector<double> doubled(gt.val());
    for (auto& v : doubled) v *= 2.0;

    FrameLossInput<double> f;
    f.gt_local = gt;
    f.gt_global = gt;
    f.pred_local = T::from_data({8, 3}, doubled);
    f.pred_global = T::from_data({8, 3}, doubled);
    f.conf_local = ones(8);
    f.conf_global = ones(8);
    f.mask = ones(8);
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d::Zero(),
                                geo::Vector2d(32, 32));
    f.pose = make_pose_out({1, 0, 0, 0}, {0, 0, 0}, {1, 1});

    // doubled prediction is a pure scale: invisible without metric supervision
    auto rel = loss::total_loss<double>({f}, 0.2, 0.0, false, 32.0);
    CHECK(rel.total.item() == 0.0);
    auto met = loss::total_loss<double>({f}, 0.2, 0.0, true, 32.0);
    CHECK(met.total.item() > 0.1);
}

TEST_CASE("duplicating every pixel leaves the normalized loss unchanged") {
    Rng rr(8);
    FrameLossInput<double> f;
    f.gt_local = rand_points(rr, 3, 0.5, 2.0);
    f.gt_global = rand_points(rr, 3, 0.5, 2.0);
    f.pred_local = rand_points(rr, 3, 0.5, 2.0);
    f.pred_global = rand_points(rr, 3, 0.5, 2.0);
    f.conf_local = T::from_data({3}, {1.5, 2.0, 2.5});
    f.conf_global = T::from_data({3}, {1.2, 1.4, 1.6});
    f.mask = ones(3);
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d(0.1, 0, 0),
                                geo::Vector2d(32, 32));
    f.pose = make_pose_out({1, 0, 0, 0}, {0, 0, 0}, {1, 1});

    auto dup_rows = [](const T& t) {
        std::vector<double> v(t.val());
        v.insert(v.end(), t.val().begin(), t.val().end());
        auto s = t.shape();
        s[0] *= 2;
        return T::from_data(std::move(s), std::move(v));
    };
    FrameLossInput<double> g;
    g.gt_local = dup_rows(f.gt_local);
    g.gt_global = dup_rows(f.gt_global);
    g.pred_local = dup_rows(f.pred_local);
    g.pred_global = dup_rows(f.pred_global);
    g.conf_local = dup_rows(f.conf_local);
    g.conf_global = dup_rows(f.conf_global);
    g.mask = ones(6);
    g.gt_pose = f.gt_pose;
    g.pose = f.pose;

    auto a = loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0);
    auto b = loss::total_loss<double>({g}, 0.2, 1.0, false, 32.0);
    CHECK(b.total.item() == doctest::Approx(a.total.item()).epsilon(1e-12));
    CHECK(b.valid_pixels == 2 * a.valid_pixels);
}

TEST_CASE("per-pixel optimum sits at confidence alpha over residual") {
    // d/dc [c*r - alpha*log c] = 0  at  c = alpha / r
    const double alpha = 0.2, resid = 0.7;
    auto unit = T::from_data({1, 3}, {1, 0, 0});
    auto ns = loss::make_norm_scale(unit, T::from_data({1, 3}, {1, 0, 0}), ones(1), false);
    auto gt = T::from_data({1, 3}, {1, 0, 0});
    auto pred = T::from_data({1, 3}, {1 + resid, 0, 0});
    auto eval = [&](double c) {
        return loss::conf_loss(pred, T::from_data({1}, {c}), gt, ones(1), ns, alpha).item();
    };
    const double c_star = alpha / resid;
    CHECK(eval(c_star) < eval(c_star * 0.8));
    CHECK(eval(c_star) < eval(c_star * 1.25));
    CHECK(eval(c_star) < eval(c_star * 0.95));
    CHECK(eval(c_star) < eval(c_star * 1.05));
}

TEST_CASE("per-frame and per-sequence scaling agree for one frame") {
    Rng r(9);
    FrameLossInput<double> f;
    f.gt_local = rand_points(r, 5, 0.5, 2.0);
    f.gt_global = rand_points(r, 5, 0.5, 2.0);
    f.pred_local = rand_points(r, 5, 0.5, 2.0);
    f.pred_global = rand_points(r, 5, 0.5, 2.0);
    f.conf_local = T::from_data({5}, {1.5, 2.0, 2.5, 1.1, 1.9});
    f.conf_global = T::from_data({5}, {1.2, 1.4, 1.6, 2.2, 1.3});
    f.mask = T::from_data({5}, {1, 1, 0, 1, 1});
    f.gt_pose = geo::CameraPose(geo::Quat::identity(), geo::Vector3d(0.2, 0.1, 0),
                                geo::Vector2d(32, 30));
    f.pose = make_pose_out({0.9, 0.1, 0, 0}, {0.05, 0, 0}, {1.0, 0.95});

    auto seq = loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0, ScaleMode::PerSequence);
    auto per = loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0, ScaleMode::PerFrame);
    CHECK(seq.total.item() == doctest::Approx(per.total.item()).epsilon(1e-12));
}

TEST_CASE("loss gradients agree with finite differences") {
    Rng r(10);
    const int n_pix = 4, n_frames = 2;
    const double f_base = 32.0;

    // leaves shared by evaluation and gradient pass
    std::vector<T> leaves;
    struct FrameLeaves {
        int pl, cl, pg, cg, q, tau, fn;
    };
    std::vector<FrameLeaves> idx;
    std::vector<T> gt_l, gt_g, masks;
    std::vector<geo::CameraPose> gt_poses;
    for (int t = 0; t < n_frames; ++t) {
        FrameLeaves fl;
        auto add_leaf = [&](ad::Shape s, double lo, double hi) {
            std::vector<double> v(ad::numel(s));
            for (auto& x : v) x = r.uniform(lo, hi);
            leaves.push_back(T::leaf(std::move(s), std::move(v)));
            return static_cast<int>(leaves.size() - 1);
        };
        fl.pl = add_leaf({n_pix, 3}, 0.4, 1.6);
        fl.cl = add_leaf({n_pix}, 1.2, 2.5);
        fl.pg = add_leaf({n_pix, 3}, 0.4, 1.6);
        fl.cg = add_leaf({n_pix}, 1.2, 2.5);
        fl.q = add_leaf({4}, 0.2, 1.0);
        fl.tau = add_leaf({1, 3}, -0.4, 0.4);
        fl.fn = add_leaf({1, 2}, 0.8, 1.2);
        idx.push_back(fl);
        gt_l.push_back(rand_points(r, n_pix, 0.5, 1.5));
        gt_g.push_back(rand_points(r, n_pix, 0.5, 1.5));
        std::vector<double> mk(n_pix, 1.0);
        if (t == 1) mk[2] = 0.0;
        masks.push_back(T::from_data({n_pix}, std::move(mk)));
        gt_poses.push_back(geo::CameraPose(geo::Quat::from_wxyz(0.9, 0.1, 0.2, 0.1),
                                           geo::Vector3d(0.2, -0.1, 0.3),
                                           geo::Vector2d(30, 34)));
    }

    auto assemble = [&]() {
        std::vector<FrameLossInput<double>> frames;
        for (int t = 0; t < n_frames; ++t) {
            FrameLossInput<double> f;
            f.pred_local = leaves[idx[t].pl];
            f.conf_local = leaves[idx[t].cl];
            f.pred_global = leaves[idx[t].pg];
            f.conf_global = leaves[idx[t].cg];
            f.pose.q = ad::quat_normalize(leaves[idx[t].q]);
            f.pose.tau = leaves[idx[t].tau];
            f.pose.f_norm = leaves[idx[t].fn];
            f.gt_local = gt_l[t];
            f.gt_global = gt_g[t];
            f.mask = masks[t];
            f.gt_pose = gt_poses[t];
            frames.push_back(std::move(f));
        }
        return loss::total_loss<double>(frames, 0.2, 0.7, false, f_base);
    };

    std::vector<std::vector<double>> analytic;
    {
        ad::Tape<double> tape;
        auto rep = assemble();
        tape.backward(rep.total);
        for (auto& l : leaves) analytic.push_back(l.grad());
    }

    const double h = 1e-6;
    for (std::size_t k = 0; k < leaves.size(); ++k)
        for (std::int64_t i = 0; i < leaves[k].size(); ++i) {
            const double save = leaves[k].data()[i];
            leaves[k].data()[i] = save + h;
            const double up = assemble().total.item();
            leaves[k].data()[i] = save - h;
            const double dn = assemble().total.item();
            leaves[k].data()[i] = save;
            const double fd = (up - dn) / (2 * h);
            const double got = analytic[k][i];
            const double err = std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1.0});
            INFO("leaf ", k, " elem ", i, " fd=", fd, " got=", got);
            CHECK(err < 1e-5);
        }
}

TEST_CASE("degenerate and contract guards") {
    Rng r(11);
    CHECK_THROWS_AS(loss::total_loss<double>({}, 0.2, 1.0, false, 32.0), ContractError);

    auto f = perfect_frame(r, 4, 32.0);
    SUBCASE("no valid pixels") {
        f.mask = T::from_data({4}, {0, 0, 0, 0});
        CHECK_THROWS_AS(loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0), DegenerateError);
    }
    SUBCASE("non-positive confidence") {
        f.conf_local = T::from_data({4}, {1.0, 0.0, 1.0, 1.0});
        CHECK_THROWS_AS(loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0), ContractError);
    }
    SUBCASE("non-finite prediction") {
        std::vector<double> bad(f.pred_local.val());
        bad[0] = std::numeric_limits<double>::quiet_NaN();
        f.pred_local = T::from_data({4, 3}, std::move(bad));
        CHECK_THROWS_AS(loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0), ContractError);
    }
    SUBCASE("shape mismatch") {
        f.pred_local = rand_points(r, 5);
        CHECK_THROWS_AS(loss::total_loss<double>({f}, 0.2, 1.0, false, 32.0), ShapeError);
    }
    SUBCASE("bad focal base") {
        CHECK_THROWS_AS(loss::total_loss<double>({f}, 0.2, 1.0, false, 0.0), ContractError);
    }
}
