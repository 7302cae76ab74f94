#include <doctest.h>

#include "streampoint/geometry.hpp"

#include <cmath>
#include <vector>

using namespace streampoint;
using geo::CameraPose;
using geo::Quat;
using geo::Sim3;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

CameraPose rand_pose(Rng& r) {
    Quat q = Quat::from_wxyz(r.normal(), r.normal(), r.normal(), r.normal());
    Vector3d tau(r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2));
    return CameraPose(q, tau, Vector2d(r.uniform(50, 200), r.uniform(50, 200)));
}

}  // namespace

TEST_CASE("quaternion basics") {
    Quat id = Quat::identity();
    CHECK(geo::quat_to_matrix(id).isIdentity(0.0));
    CHECK(geo::quat_geodesic_deg(id, id) == 0.0);

    // q and -q are the same rotation; from_wxyz canonicalizes the sign
    Quat q = Quat::from_wxyz(0.3, -0.2, 0.5, 0.7);
    Quat neg = Quat::from_wxyz(-0.3, 0.2, -0.5, -0.7);
    CHECK(q.w == neg.w);
    CHECK(q.x == neg.x);
    CHECK(geo::quat_geodesic_deg(q, neg) == 0.0);
    CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-14));

    // 90 degrees about z
    const double s = std::sqrt(0.5);
    Quat qz = Quat::from_wxyz(s, 0, 0, s);
    Matrix3d m = geo::quat_to_matrix(qz);
    Matrix3d want;
    want << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((m - want).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(geo::quat_geodesic_deg(Quat::identity(), qz) == doctest::Approx(90.0).epsilon(1e-12));

    CHECK_THROWS_AS(Quat::from_wxyz(0, 0, 0, 0), ContractError);
}

TEST_CASE("matrix_to_quat inverts quat_to_matrix") {
    Rng r(5);
    for (int i = 0; i < 50; ++i) {
        Quat q = Quat::from_wxyz(r.normal(), r.normal(), r.normal(), r.normal());
        Quat back = geo::matrix_to_quat(geo::quat_to_matrix(q));
        CHECK(std::abs(back.w - q.w) < 1e-12);
        CHECK(std::abs(back.x - q.x) < 1e-12);
        CHECK(std::abs(back.y - q.y) < 1e-12);
        CHECK(std::abs(back.z - q.z) < 1e-12);
    }
    // branch coverage: rotations with small trace pick the other extraction paths
    for (auto axis : {0, 1, 2}) {
        Eigen::AngleAxisd aa(3.1, Vector3d::Unit(axis));
        Matrix3d m = aa.toRotationMatrix();
        Quat q = geo::matrix_to_quat(m);
        CHECK((geo::quat_to_matrix(q) - m).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("unproject puts the principal point on the optical axis") {
    const int h = 4, w = 4;
    std::vector<float> depth(h * w, 2.0f);
    CameraPose pose = CameraPose::identity(100, 100);
    Vector2d pp(1.0, 2.0);
    geo::Pointmap pm = geo::unproject(depth, h, w, pose, pp);
    // pixel (u=1, v=2) sits on the axis: (0, 0, d)
    const float* p = pm.at(2, 1);
    CHECK(p[0] == 0.0f);
    CHECK(p[1] == 0.0f);
    CHECK(p[2] == 2.0f);
}

TEST_CASE("unproject matches the pinhole formula") {
    // u=150, v=50, d=2, f=100, c=(50,50): x = 2*(150-50)/100 = 2, y = 0
    const int h = 60, w = 160;
    std::vector<float> depth(static_cast<std::size_t>(h) * w, 2.0f);
    CameraPose pose = CameraPose::identity(100, 100);
    geo::Pointmap pm = geo::unproject(depth, h, w, pose, Vector2d(50, 50));
    const float* p = pm.at(50, 150);
    CHECK(p[0] == 2.0f);
    CHECK(p[1] == 0.0f);
    CHECK(p[2] == 2.0f);
}

TEST_CASE("unproject zeroes invalid depth and clears the mask") {
    const int h = 2, w = 2;
    std::vector<float> depth = {1.0f, 0.0f, -3.0f, 2.0f};
    geo::Mask mask(4, 1);
    CameraPose pose = CameraPose::identity(10, 10);
    geo::Pointmap pm = geo::unproject(depth, h, w, pose, Vector2d(0.5, 0.5), &mask);
    CHECK(mask[0] == 1);
    CHECK(mask[1] == 0);
    CHECK(mask[2] == 0);
    CHECK(mask[3] == 1);
    CHECK(pm.at(0, 1)[2] == 0.0f);
    CHECK(pm.at(1, 0)[2] == 0.0f);
}

TEST_CASE("project inverts unproject") {
    Rng r(9);
    const int h = 8, w = 8;
    CameraPose pose = CameraPose::identity(37.0, 41.0);
    Vector2d pp(3.5, 3.5);
    std::vector<float> depth(h * w);
    for (auto& d : depth) d = static_cast<float>(r.uniform(0.5, 5.0));
    geo::Pointmap pm = geo::unproject(depth, h, w, pose, pp);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const float* p = pm.at(v, u);
            Vector2d uv = geo::project(Vector3d(p[0], p[1], p[2]), pose, pp);
            CHECK(std::abs(uv.x() - u) < 1e-5);
            CHECK(std::abs(uv.y() - v) < 1e-5);
        }
    CHECK_THROWS_AS(geo::project(Vector3d(0, 0, -1), pose, pp), ContractError);
}

TEST_CASE("local_to_global is a bitwise copy for the anchor frame") {
    Rng r(13);
    geo::Pointmap pm(3, 3, geo::PointmapRef::Local);
    for (auto& v : pm.xyz) v = static_cast<float>(r.normal());
    CameraPose pose = rand_pose(r);
    geo::Pointmap g = geo::local_to_global(pm, pose, pose);
    CHECK(g.ref == geo::PointmapRef::Global);
    for (std::size_t i = 0; i < pm.xyz.size(); ++i) CHECK(g.xyz[i] == pm.xyz[i]);
}

TEST_CASE("local_to_global applies the relative rigid motion") {
    // anchor at origin, camera translated by (1,0,0) with identity rotation:
    // a local point x maps to x + (1,0,0)
    geo::Pointmap pm(1, 2, geo::PointmapRef::Local);
    pm.at(0, 0)[0] = 1.f;
    pm.at(0, 0)[1] = 2.f;
    pm.at(0, 0)[2] = 3.f;
    CameraPose anchor = CameraPose::identity(1, 1);
    CameraPose cam(Quat::identity(), Vector3d(1, 0, 0), Vector2d(1, 1));
    geo::Pointmap g = geo::local_to_global(pm, cam, anchor);
    CHECK(g.at(0, 0)[0] == doctest::Approx(2.0f));
    CHECK(g.at(0, 0)[1] == doctest::Approx(2.0f));
    CHECK(g.at(0, 0)[2] == doctest::Approx(3.0f));
}

TEST_CASE("global_to_local inverts local_to_global") {
    Rng r(17);
    for (int trial = 0; trial < 10; ++trial) {
        geo::Pointmap pm(4, 5, geo::PointmapRef::Local);
        for (auto& v : pm.xyz) v = static_cast<float>(r.uniform(-3, 3));
        CameraPose pose = rand_pose(r);
        CameraPose anchor = rand_pose(r);
        geo::Pointmap g = geo::local_to_global(pm, pose, anchor);
        geo::Pointmap back = geo::global_to_local(g, pose, anchor);
        for (std::size_t i = 0; i < pm.xyz.size(); ++i)
            CHECK(std::abs(back.xyz[i] - pm.xyz[i]) < 1e-5f);
    }
}

TEST_CASE("relative_pose of a pose with itself is the exact identity") {
    Rng r(21);
    CameraPose p = rand_pose(r);
    CameraPose rel = geo::relative_pose(p, p);
    CHECK(rel.q.w == 1.0);
    CHECK(rel.q.x == 0.0);
    CHECK(rel.q.y == 0.0);
    CHECK(rel.q.z == 0.0);
    CHECK(rel.tau == Vector3d::Zero());
    CHECK(rel.f == p.f);
}

TEST_CASE("relative_pose composes with the anchor to recover the pose") {
    Rng r(23);
    for (int trial = 0; trial < 10; ++trial) {
        CameraPose anchor = rand_pose(r);
        CameraPose pose = rand_pose(r);
        CameraPose rel = geo::relative_pose(anchor, pose);
        // anchor * rel must equal pose as a transform on points
        Vector3d x(r.normal(), r.normal(), r.normal());
        Vector3d via = anchor.to_world(rel.to_world(x));
        Vector3d direct = pose.to_world(x);
        CHECK((via - direct).norm() < 1e-9);
    }
}

TEST_CASE("sim3 inverse and composition") {
    Rng r(29);
    Sim3 a;
    a.s = 2.5;
    a.R = geo::quat_to_matrix(Quat::from_wxyz(r.normal(), r.normal(), r.normal(), r.normal()));
    a.t = Vector3d(0.3, -1.2, 2.0);
    Sim3 b;
    b.s = 0.4;
    b.R = geo::quat_to_matrix(Quat::from_wxyz(r.normal(), r.normal(), r.normal(), r.normal()));
    b.t = Vector3d(1, 2, 3);

    Vector3d x(0.5, -0.7, 1.1);
    CHECK((a.inverse().apply(a.apply(x)) - x).norm() < 1e-12);
    CHECK((a.compose(b).apply(x) - a.apply(b.apply(x))).norm() < 1e-12);

    Sim3 c = a.compose(b);
    Sim3 d = a.compose(b.inverse());
    // associativity: (a∘b)∘d == a∘(b∘d)
    CHECK((c.compose(d).apply(x) - a.compose(b.compose(d)).apply(x)).norm() < 1e-9);

    Sim3 bad;
    bad.s = -1;
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("umeyama on identical clouds returns the exact identity") {
    Rng r(31);
    std::vector<Vector3d> pts;
    for (int i = 0; i < 20; ++i) pts.emplace_back(r.normal(), r.normal(), r.normal());
    Sim3 T = geo::umeyama_sim3(pts, pts);
    CHECK(T.s == 1.0);
    CHECK(T.R == Matrix3d::Identity());
    CHECK(T.t == Vector3d::Zero());
}

TEST_CASE("umeyama recovers a known similarity") {
    Rng r(37);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vector3d> src;
        for (int i = 0; i < 15; ++i) src.emplace_back(r.normal(), r.normal(), r.normal());
        Sim3 want;
        want.s = r.uniform(0.2, 4.0);
        want.R = geo::quat_to_matrix(
            Quat::from_wxyz(r.normal(), r.normal(), r.normal(), r.normal()));
        want.t = Vector3d(r.uniform(-5, 5), r.uniform(-5, 5), r.uniform(-5, 5));
        std::vector<Vector3d> dst;
        for (const auto& p : src) dst.push_back(want.apply(p));
        Sim3 got = geo::umeyama_sim3(src, dst);
        CHECK(std::abs(got.s - want.s) < 1e-6 * want.s);
        CHECK((got.R - want.R).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((got.t - want.t).norm() < 1e-6);
        for (const auto& p : src) CHECK((got.apply(p) - want.apply(p)).norm() < 1e-6);
    }
}

TEST_CASE("umeyama rejects degenerate inputs") {
    std::vector<Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(geo::umeyama_sim3(two, two), DegenerateError);

    // collinear points leave the rotation unconstrained
    std::vector<Vector3d> line, line_dst;
    for (int i = 0; i < 8; ++i) {
        line.emplace_back(i, 0, 0);
        line_dst.emplace_back(0, i, 0);
    }
    CHECK_THROWS_AS(geo::umeyama_sim3(line, line_dst), DegenerateError);

    std::vector<Vector3d> three = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    std::vector<Vector3d> mismatched = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(geo::umeyama_sim3(three, mismatched), ShapeError);
}

TEST_CASE("pointmap accessors address row-major pixels") {
    geo::Pointmap pm(2, 3, geo::PointmapRef::Local);
    pm.at(1, 2)[0] = 7.f;
    CHECK(pm.xyz[(1 * 3 + 2) * 3 + 0] == 7.f);
    CHECK(pm.count() == 6);
}
