#include "streampoint/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace streampoint::geo {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Quat Quat::from_wxyz(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n < 1e-12) throw ContractError("quaternion: zero norm");
    double s = (w < 0) ? -1.0 / n : 1.0 / n;
    return Quat{w * s, x * s, y * s, z * s};
}

double Quat::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Matrix3d quat_to_matrix(const Quat& q) {
    Matrix3d r;
    double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    r(0, 0) = ww + xx - yy - zz;
    r(0, 1) = 2 * (q.x * q.y - q.w * q.z);
    r(0, 2) = 2 * (q.x * q.z + q.w * q.y);
    r(1, 0) = 2 * (q.x * q.y + q.w * q.z);
    r(1, 1) = ww - xx + yy - zz;
    r(1, 2) = 2 * (q.y * q.z - q.w * q.x);
    r(2, 0) = 2 * (q.x * q.z - q.w * q.y);
    r(2, 1) = 2 * (q.y * q.z + q.w * q.x);
    r(2, 2) = ww - xx - yy + zz;
    return r;
}

Quat matrix_to_quat(const Matrix3d& r) {
    // Shepperd's method: pick the largest diagonal combination for stability.
    double tr = r.trace();
    double w, x, y, z;
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        w = 0.25 * s;
        x = (r(2, 1) - r(1, 2)) / s;
        y = (r(0, 2) - r(2, 0)) / s;
        z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2;
        w = (r(2, 1) - r(1, 2)) / s;
        x = 0.25 * s;
        y = (r(0, 1) + r(1, 0)) / s;
        z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2;
        w = (r(0, 2) - r(2, 0)) / s;
        x = (r(0, 1) + r(1, 0)) / s;
        y = 0.25 * s;
        z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2;
        w = (r(1, 0) - r(0, 1)) / s;
        x = (r(0, 2) + r(2, 0)) / s;
        y = (r(1, 2) + r(2, 1)) / s;
        z = 0.25 * s;
    }
    return Quat::from_wxyz(w, x, y, z);
}

double quat_geodesic_deg(const Quat& a, const Quat& b) {
    if (a.norm() < 1e-12 || b.norm() < 1e-12)
        throw ContractError("quat_geodesic_deg: zero quaternion");
    double d = std::abs(a.dot(b)) / (a.norm() * b.norm());
    d = std::min(d, 1.0);
    return 2.0 * std::acos(d) * 180.0 / kPi;
}

CameraPose::CameraPose(const Quat& q_, const Vector3d& tau_, const Vector2d& f_)
    : q(Quat::from_wxyz(q_.w, q_.x, q_.y, q_.z)), tau(tau_), f(f_) {
    if (!(f.x() > 0) || !(f.y() > 0)) throw ContractError("CameraPose: focal must be positive");
}

CameraPose relative_pose(const CameraPose& anchor, const CameraPose& pose) {
    if (anchor.bitwise_equal(pose)) return CameraPose(Quat::identity(), Vector3d::Zero(), pose.f);
    Matrix3d ra = anchor.rotation();
    Matrix3d rel = ra.transpose() * pose.rotation();
    Vector3d t = ra.transpose() * (pose.tau - anchor.tau);
    return CameraPose(matrix_to_quat(rel), t, pose.f);
}

Pointmap unproject(const std::vector<float>& depth, int h, int w, const CameraPose& pose,
                   const Vector2d& principal_point, Mask* mask) {
    if (static_cast<std::size_t>(h) * w != depth.size())
        throw ShapeError("unproject: depth size mismatch");
    if (mask && mask->size() != depth.size()) throw ShapeError("unproject: mask size mismatch");
    Pointmap pm(h, w, PointmapRef::Local);
    const double fx = pose.f.x(), fy = pose.f.y();
    const double cx = principal_point.x(), cy = principal_point.y();
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            std::size_t i = static_cast<std::size_t>(v) * w + u;
            float d = depth[i];
            float* p = pm.at(v, u);
            if (!(d > 0.f)) {
                p[0] = p[1] = p[2] = 0.f;
                if (mask) (*mask)[i] = 0;
                continue;
            }
            p[0] = static_cast<float>(d * ((u - cx) / fx));
            p[1] = static_cast<float>(d * ((v - cy) / fy));
            p[2] = d;
        }
    return pm;
}

Vector2d project(const Vector3d& p_cam, const CameraPose& pose, const Vector2d& principal_point) {
    if (!(p_cam.z() > 0)) throw ContractError("project: point behind camera");
    return Vector2d(pose.f.x() * p_cam.x() / p_cam.z() + principal_point.x(),
                    pose.f.y() * p_cam.y() / p_cam.z() + principal_point.y());
}

namespace {

Pointmap transform_pointmap(const Pointmap& pm, const Matrix3d& r, const Vector3d& t,
                            PointmapRef out_ref) {
    Pointmap out(pm.h, pm.w, out_ref);
    for (std::size_t i = 0; i < pm.count(); ++i) {
        const float* p = pm.xyz.data() + i * 3;
        Vector3d q = r * Vector3d(p[0], p[1], p[2]) + t;
        float* o = out.xyz.data() + i * 3;
        o[0] = static_cast<float>(q.x());
        o[1] = static_cast<float>(q.y());
        o[2] = static_cast<float>(q.z());
    }
    return out;
}

}  // namespace

Pointmap local_to_global(const Pointmap& pm, const CameraPose& pose,
                         const CameraPose& world_from) {
    if (pm.ref != PointmapRef::Local) throw ContractError("local_to_global: not a local map");
    if (pose.q == world_from.q && pose.tau == world_from.tau) {
        Pointmap out = pm;
        out.ref = PointmapRef::Global;
        return out;
    }
    Matrix3d r1t = world_from.rotation().transpose();
    Matrix3d r = r1t * pose.rotation();
    Vector3d t = r1t * (pose.tau - world_from.tau);
    return transform_pointmap(pm, r, t, PointmapRef::Global);
}

Pointmap global_to_local(const Pointmap& pm, const CameraPose& pose,
                         const CameraPose& world_from) {
    if (pm.ref != PointmapRef::Global) throw ContractError("global_to_local: not a global map");
    if (pose.q == world_from.q && pose.tau == world_from.tau) {
        Pointmap out = pm;
        out.ref = PointmapRef::Local;
        return out;
    }
    Matrix3d rt = pose.rotation().transpose();
    Matrix3d r = rt * world_from.rotation();
    Vector3d t = rt * (world_from.tau - pose.tau);
    return transform_pointmap(pm, r, t, PointmapRef::Local);
}

Sim3 Sim3::inverse() const {
    Sim3 inv;
    inv.s = 1.0 / s;
    inv.R = R.transpose();
    inv.t = -(inv.s * (inv.R * t));
    return inv;
}

Sim3 Sim3::compose(const Sim3& inner) const {
    Sim3 out;
    out.s = s * inner.s;
    out.R = R * inner.R;
    out.t = s * (R * inner.t) + t;
    return out;
}

void Sim3::validate() const {
    if (!(s > 0)) throw ContractError("Sim3: scale must be positive");
    if (std::abs(R.determinant() - 1.0) > 1e-6 ||
        (R * R.transpose() - Matrix3d::Identity()).norm() > 1e-6)
        throw ContractError("Sim3: R is not a rotation");
}

Sim3 umeyama_sim3(const std::vector<Vector3d>& src, const std::vector<Vector3d>& dst) {
    if (src.size() != dst.size()) throw ShapeError("umeyama_sim3: size mismatch");
    const std::size_t n = src.size();
    if (n < 3) throw DegenerateError("umeyama_sim3: needs at least 3 points");
    if (src == dst) return Sim3::identity();

    Vector3d mu_s = Vector3d::Zero(), mu_d = Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= static_cast<double>(n);
    mu_d /= static_cast<double>(n);

    Matrix3d cov = Matrix3d::Zero();
    double var_s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Vector3d xs = src[i] - mu_s;
        Vector3d xd = dst[i] - mu_d;
        cov += xd * xs.transpose();
        var_s += xs.squaredNorm();
    }
    cov /= static_cast<double>(n);
    var_s /= static_cast<double>(n);
    if (var_s < 1e-18) throw DegenerateError("umeyama_sim3: source points coincide");

    Eigen::JacobiSVD<Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Vector3d sv = svd.singularValues();
    // Rotation needs at least a plane of support: two significant singular
    // values (near-collinear clouds leave a free rotation axis).
    if (sv(1) < 1e-12 || sv(1) < 1e-9 * sv(0))
        throw DegenerateError("umeyama_sim3: degenerate point configuration");

    Vector3d d = Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) d(2) = -1;
    Matrix3d r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
    double scale = (sv(0) * d(0) + sv(1) * d(1) + sv(2) * d(2)) / var_s;
    if (!(scale > 0)) throw DegenerateError("umeyama_sim3: non-positive scale");

    Sim3 out;
    out.s = scale;
    out.R = r;
    out.t = mu_d - scale * (r * mu_s);
    out.validate();
    return out;
}

}  // namespace streampoint::geo
