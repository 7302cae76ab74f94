#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "streampoint/common.hpp"

namespace streampoint::geo {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

// Unit quaternion, scalar-first storage, canonical sign w >= 0.
struct Quat {
    double w = 1, x = 0, y = 0, z = 0;

    static Quat identity() { return {}; }

    // Normalizes and sign-canonicalizes; zero-norm input is a contract
    // violation.
    static Quat from_wxyz(double w, double x, double y, double z);

    double norm() const;
    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    bool operator==(const Quat& o) const = default;
};

Matrix3d quat_to_matrix(const Quat& q);
Quat matrix_to_quat(const Matrix3d& r);

// Rotation distance in degrees, invariant to quaternion sign: 2*acos(|q1.q2|).
double quat_geodesic_deg(const Quat& a, const Quat& b);

// Camera-to-world transform plus pinhole focal lengths in pixels.
// Convention: +z forward, +x right, +y down; tau is the camera center in
// world coordinates.
struct CameraPose {
    Quat q;
    Vector3d tau = Vector3d::Zero();
    Vector2d f = Vector2d::Ones();

    CameraPose() = default;
    CameraPose(const Quat& q_, const Vector3d& tau_, const Vector2d& f_);

    static CameraPose identity(double fx, double fy) {
        return CameraPose(Quat::identity(), Vector3d::Zero(), Vector2d(fx, fy));
    }

    Matrix3d rotation() const { return quat_to_matrix(q); }
    Vector3d to_world(const Vector3d& p_cam) const { return rotation() * p_cam + tau; }
    Vector3d to_camera(const Vector3d& p_world) const {
        return rotation().transpose() * (p_world - tau);
    }

    bool bitwise_equal(const CameraPose& o) const {
        return q == o.q && tau == o.tau && f == o.f;
    }
};

// Relative transform mapping `pose`'s camera frame into `anchor`'s camera
// frame: T = anchor^-1 * pose. anchor == pose (bitwise) gives exact identity.
CameraPose relative_pose(const CameraPose& anchor, const CameraPose& pose);

enum class PointmapRef : std::uint8_t { Local = 0, Global = 1 };

// H x W grid of 3-d points, row-major, channels-last, tagged with the frame
// it is expressed in.
struct Pointmap {
    int h = 0, w = 0;
    PointmapRef ref = PointmapRef::Local;
    std::vector<float> xyz;  // h*w*3

    Pointmap() = default;
    Pointmap(int h_, int w_, PointmapRef ref_)
        : h(h_), w(w_), ref(ref_), xyz(static_cast<std::size_t>(h_) * w_ * 3, 0.f) {}

    float* at(int y, int x) { return xyz.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
    const float* at(int y, int x) const {
        return xyz.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    }
    std::size_t count() const { return static_cast<std::size_t>(h) * w; }
};

using Mask = std::vector<std::uint8_t>;  // h*w, nonzero = valid

// Back-projects a depth map: point = d * ((u-cx)/fx, (v-cy)/fy, 1), with
// (u,v) = (column, row) pixel indices and no half-pixel offset. Pixels with
// depth <= 0 are zeroed and, when a mask is supplied, cleared in it.
Pointmap unproject(const std::vector<float>& depth, int h, int w, const CameraPose& pose,
                   const Vector2d& principal_point, Mask* mask = nullptr);

// Forward projection of one camera-frame point to (u, v); z must be > 0.
Vector2d project(const Vector3d& p_cam, const CameraPose& pose, const Vector2d& principal_point);

// Re-expresses a local pointmap in the world frame defined by `world_from`
// (the frame-1 pose): X_g = T_1^-1 * T_t * X_local. If pose == world_from
// bitwise the data is copied unchanged, so frame 1 keeps exact equality.
Pointmap local_to_global(const Pointmap& pm, const CameraPose& pose, const CameraPose& world_from);
Pointmap global_to_local(const Pointmap& pm, const CameraPose& pose, const CameraPose& world_from);

// Similarity transform x -> s * R * x + t with s > 0, det(R) = +1.
struct Sim3 {
    double s = 1;
    Matrix3d R = Matrix3d::Identity();
    Vector3d t = Vector3d::Zero();

    static Sim3 identity() { return {}; }

    Vector3d apply(const Vector3d& p) const { return s * (R * p) + t; }
    Sim3 inverse() const;
    Sim3 compose(const Sim3& inner) const;  // this ∘ inner
    void validate() const;
};

// Closed-form Umeyama alignment: the Sim3 minimizing sum ||dst - T(src)||^2.
// Needs >= 3 points and a well-conditioned covariance; identical inputs give
// the exact identity.
Sim3 umeyama_sim3(const std::vector<Vector3d>& src, const std::vector<Vector3d>& dst);

}  // namespace streampoint::geo
