#include "streampoint/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace streampoint::gen {

using geo::CameraPose;
using geo::Matrix3d;
using geo::Pointmap;
using geo::Quat;
using geo::Vector2d;
using geo::Vector3d;

geo::Pointmap Frame::local_pointmap() const {
    geo::Mask scratch = mask;
    return geo::unproject(depth, h, w, pose, principal_point(), &scratch);
}

geo::Pointmap Frame::global_pointmap(const geo::CameraPose& world_from) const {
    return geo::local_to_global(local_pointmap(), pose, world_from);
}

void SceneConfig::validate() const {
    if (n_frames < 2) throw ConfigError("scene: n_frames must be >= 2");
    if (resolution <= 0) throw ConfigError("scene: resolution must be positive");
    if (patch_multiple <= 0) throw ConfigError("scene: patch_multiple must be positive");
    if (resolution % patch_multiple != 0)
        throw ConfigError("scene: resolution " + std::to_string(resolution) +
                          " not a multiple of " + std::to_string(patch_multiple));
    if (n_primitives <= 0) throw ConfigError("scene: n_primitives must be positive");
    if (focal < 0) throw ConfigError("scene: negative focal");
}

Trajectory trajectory_from_string(const std::string& s) {
    if (s == "orbit") return Trajectory::Orbit;
    if (s == "dolly") return Trajectory::Dolly;
    if (s == "walk") return Trajectory::RandomWalk;
    throw ConfigError("unknown trajectory: " + s);
}

std::string trajectory_to_string(Trajectory t) {
    switch (t) {
        case Trajectory::Orbit: return "orbit";
        case Trajectory::Dolly: return "dolly";
        case Trajectory::RandomWalk: return "walk";
    }
    return "orbit";
}

namespace {

constexpr double kPi = 3.14159265358979323846;

enum class PrimKind { Sphere, Box };

struct Primitive {
    PrimKind kind;
    Vector3d center;        // sphere center or box center
    double radius = 0;      // sphere
    Vector3d half = Vector3d::Zero();  // box half extents
    int texture = 0;        // 0 checker, 1 gradient, 2 noise
    Vector3d base_color = Vector3d::Ones();
    Vector3d alt_color = Vector3d::Ones();
    bool dynamic = false;
    Vector3d velocity = Vector3d::Zero();  // world units per frame step

    Vector3d center_at(int t) const {
        return dynamic ? Vector3d(center + velocity * (t - 1)) : center;
    }
};

struct World {
    std::vector<Primitive> prims;
    double back_plane_z = 7.0;  // fronto-parallel wall behind the primitives
    Vector3d light = Vector3d(-0.35, -0.5, -0.8).normalized();
};

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vector3d point = Vector3d::Zero();
    Vector3d normal = Vector3d::Zero();
    int prim = -1;  // -1 none, -2 back plane
};

// value-noise hash on integer lattice points, deterministic across platforms
double lattice_hash(std::int64_t x, std::int64_t y, std::int64_t z) {
    std::uint64_t h = static_cast<std::uint64_t>(x) * 0x8da6b343ull +
                      static_cast<std::uint64_t>(y) * 0xd8163841ull +
                      static_cast<std::uint64_t>(z) * 0xcb1ab31full;
    h ^= h >> 13;
    h *= 0x7feb352dull;
    h ^= h >> 15;
    return static_cast<double>(h & 0xffffffull) / static_cast<double>(0xffffffull);
}

double value_noise(const Vector3d& p) {
    Vector3d f(std::floor(p.x()), std::floor(p.y()), std::floor(p.z()));
    Vector3d u = p - f;
    auto ix = static_cast<std::int64_t>(f.x());
    auto iy = static_cast<std::int64_t>(f.y());
    auto iz = static_cast<std::int64_t>(f.z());
    double acc = 0;
    for (int dz = 0; dz <= 1; ++dz)
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                double wx = dx ? u.x() : 1 - u.x();
                double wy = dy ? u.y() : 1 - u.y();
                double wz = dz ? u.z() : 1 - u.z();
                acc += wx * wy * wz * lattice_hash(ix + dx, iy + dy, iz + dz);
            }
    return acc;
}

Vector3d shade(const Primitive& prim, const Vector3d& p, const Vector3d& n,
               const Vector3d& light) {
    Vector3d albedo;
    switch (prim.texture) {
        case 0: {
            int c = (static_cast<int>(std::floor(p.x() * 2.5)) +
                     static_cast<int>(std::floor(p.y() * 2.5)) +
                     static_cast<int>(std::floor(p.z() * 2.5))) & 1;
            albedo = c ? prim.base_color : prim.alt_color;
            break;
        }
        case 1: {
            double a = std::clamp(0.5 + 0.5 * std::sin(p.x() * 2.0 + p.y() * 1.3), 0.0, 1.0);
            albedo = prim.base_color * a + prim.alt_color * (1 - a);
            break;
        }
        default: {
            double a = value_noise(p * 3.0);
            albedo = prim.base_color * a + prim.alt_color * (1 - a);
            break;
        }
    }
    double diffuse = 0.55 + 0.45 * std::max(0.0, n.dot(-light));
    Vector3d c = albedo * diffuse;
    return c.cwiseMax(0.0).cwiseMin(1.0);
}

Vector3d back_plane_color(const Vector3d& p) {
    int c = (static_cast<int>(std::floor(p.x() * 1.2 + 100)) +
             static_cast<int>(std::floor(p.y() * 1.2 + 100))) & 1;
    double g = c ? 0.82 : 0.58;
    return Vector3d(g * 0.9, g * 0.95, g);
}

bool hit_sphere(const Vector3d& o, const Vector3d& d, const Vector3d& c, double r, double* t) {
    Vector3d oc = o - c;
    double a = d.squaredNorm();
    double b = 2.0 * oc.dot(d);
    double cc = oc.squaredNorm() - r * r;
    double disc = b * b - 4 * a * cc;
    if (disc < 0) return false;
    double sq = std::sqrt(disc);
    double t0 = (-b - sq) / (2 * a);
    double t1 = (-b + sq) / (2 * a);
    double tt = t0 > 1e-6 ? t0 : (t1 > 1e-6 ? t1 : -1);
    if (tt < 0) return false;
    *t = tt;
    return true;
}

bool hit_box(const Vector3d& o, const Vector3d& d, const Vector3d& lo, const Vector3d& hi,
             double* t, Vector3d* n) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis = 0;
    double axis_sign = 1;
    for (int i = 0; i < 3; ++i) {
        if (std::abs(d(i)) < 1e-12) {
            if (o(i) < lo(i) || o(i) > hi(i)) return false;
            continue;
        }
        double inv = 1.0 / d(i);
        double t0 = (lo(i) - o(i)) * inv;
        double t1 = (hi(i) - o(i)) * inv;
        double sign = -1;
        if (t0 > t1) {
            std::swap(t0, t1);
            sign = 1;
        }
        if (t0 > tmin) {
            tmin = t0;
            axis = i;
            axis_sign = sign;
        }
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    if (tmin <= 1e-6) return false;  // inside or behind
    *t = tmin;
    *n = Vector3d::Zero();
    (*n)(axis) = axis_sign;
    return true;
}

Hit cast_ray(const World& world, int t_frame, const Vector3d& o, const Vector3d& d) {
    Hit best;
    for (std::size_t i = 0; i < world.prims.size(); ++i) {
        const Primitive& pr = world.prims[i];
        Vector3d c = pr.center_at(t_frame);
        double t;
        if (pr.kind == PrimKind::Sphere) {
            if (hit_sphere(o, d, c, pr.radius, &t) && t < best.t) {
                best.t = t;
                best.point = o + t * d;
                best.normal = (best.point - c).normalized();
                best.prim = static_cast<int>(i);
            }
        } else {
            Vector3d n;
            if (hit_box(o, d, c - pr.half, c + pr.half, &t, &n) && t < best.t) {
                best.t = t;
                best.point = o + t * d;
                best.normal = n;
                best.prim = static_cast<int>(i);
            }
        }
    }
    if (std::abs(d.z()) > 1e-12) {
        double t = (world.back_plane_z - o.z()) / d.z();
        if (t > 1e-6 && t < best.t) {
            best.t = t;
            best.point = o + t * d;
            best.normal = Vector3d(0, 0, -1);
            best.prim = -2;
        }
    }
    return best;
}

World build_world(Rng& rng, const SceneConfig& cfg) {
    World w;
    w.back_plane_z = rng.uniform(6.0, 8.0);
    for (int i = 0; i < cfg.n_primitives; ++i) {
        Primitive p;
        p.kind = rng.uniform() < 0.6 ? PrimKind::Sphere : PrimKind::Box;
        p.center = Vector3d(rng.uniform(-1.6, 1.6), rng.uniform(-1.1, 1.1),
                            rng.uniform(2.6, 5.2));
        if (p.kind == PrimKind::Sphere) {
            p.radius = rng.uniform(0.35, 0.85);
        } else {
            p.half = Vector3d(rng.uniform(0.25, 0.7), rng.uniform(0.25, 0.7),
                              rng.uniform(0.25, 0.7));
        }
        p.texture = static_cast<int>(rng.uniform_index(3));
        p.base_color = Vector3d(rng.uniform(0.25, 1.0), rng.uniform(0.25, 1.0),
                                rng.uniform(0.25, 1.0));
        p.alt_color = Vector3d(rng.uniform(0.05, 0.7), rng.uniform(0.05, 0.7),
                               rng.uniform(0.05, 0.7));
        if (cfg.dynamic && rng.uniform() < 0.5) {
            p.dynamic = true;
            p.velocity = Vector3d(rng.uniform(-0.08, 0.08), rng.uniform(-0.05, 0.05),
                                  rng.uniform(-0.06, 0.06));
        }
        w.prims.push_back(p);
    }
    return w;
}

// Camera basis from a forward direction, keeping +y pointing world-down.
Matrix3d look_rotation(const Vector3d& forward) {
    Vector3d fz = forward.normalized();
    Vector3d down(0, 1, 0);
    Vector3d fx = down.cross(fz).normalized();  // +x right
    if (!fx.allFinite() || fx.norm() < 1e-9) fx = Vector3d(1, 0, 0);
    Vector3d fy = fz.cross(fx).normalized();
    Matrix3d r;
    r.col(0) = fx;
    r.col(1) = fy;
    r.col(2) = fz;
    return r;
}

std::vector<CameraPose> make_trajectory(Rng& rng, const SceneConfig& cfg, double focal) {
    const int n = cfg.n_frames;
    const Vector2d f(focal, focal);
    std::vector<CameraPose> poses;
    poses.reserve(n);
    const Vector3d target(rng.uniform(-0.3, 0.3), rng.uniform(-0.2, 0.2),
                          rng.uniform(3.4, 4.2));

    switch (cfg.trajectory) {
        case Trajectory::Orbit: {
            double arc = rng.uniform(0.35, 0.7);  // radians end-to-end
            double radius = target.z() * rng.uniform(0.85, 1.05);
            double start = -arc / 2;
            for (int k = 0; k < n; ++k) {
                double a = start + arc * (n == 1 ? 0.0 : static_cast<double>(k) / (n - 1));
                Vector3d center = target + Vector3d(radius * std::sin(a),
                                                    rng.uniform(-0.02, 0.02),
                                                    -radius * std::cos(a));
                Matrix3d r = look_rotation(target - center);
                poses.emplace_back(geo::matrix_to_quat(r), center, f);
            }
            break;
        }
        case Trajectory::Dolly: {
            Vector3d step(rng.uniform(-0.06, 0.06), rng.uniform(-0.03, 0.03),
                          rng.uniform(0.12, 0.25));
            for (int k = 0; k < n; ++k) {
                Vector3d center = Vector3d::Zero() + step * k;
                Matrix3d r = look_rotation(target - center);
                poses.emplace_back(geo::matrix_to_quat(r), center, f);
            }
            break;
        }
        case Trajectory::RandomWalk: {
            Vector3d center = Vector3d::Zero();
            Vector3d fwd(0, 0, 1);
            for (int k = 0; k < n; ++k) {
                Matrix3d r = look_rotation(fwd);
                poses.emplace_back(geo::matrix_to_quat(r), center, f);
                center += Vector3d(rng.uniform(-0.12, 0.12), rng.uniform(-0.06, 0.06),
                                   rng.uniform(-0.05, 0.18));
                // bounded turn keeps consecutive rotation under ~15 degrees
                double yaw = rng.uniform(-0.2, 0.2);
                double pitch = rng.uniform(-0.1, 0.1);
                Matrix3d spin =
                    (Eigen::AngleAxisd(yaw, Vector3d::UnitY()) *
                     Eigen::AngleAxisd(pitch, Vector3d::UnitX())).toRotationMatrix();
                fwd = (spin * fwd).normalized();
                if (fwd.z() < 0.35) fwd = Vector3d(fwd.x(), fwd.y(), 0.35).normalized();
            }
            break;
        }
    }

    // Re-anchor so the first camera is the exact identity (world frame).
    std::vector<CameraPose> out;
    out.reserve(n);
    const CameraPose anchor = poses[0];
    for (const auto& p : poses) out.push_back(geo::relative_pose(anchor, p));
    return out;
}

}  // namespace

SceneSequence generate_scene(std::uint64_t seed, const SceneConfig& config) {
    config.validate();
    Rng rng(seed);
    const int res = config.resolution;
    const double focal = config.focal > 0 ? config.focal : static_cast<double>(res);

    World world = build_world(rng, config);
    std::vector<CameraPose> poses = make_trajectory(rng, config, focal);

    SceneSequence seq;
    seq.metric_scale = config.metric_scale;
    seq.seed = seed;
    seq.frames.resize(config.n_frames);

    const double cx = res / 2.0, cy = res / 2.0;
    for (int k = 0; k < config.n_frames; ++k) {
        Frame& fr = seq.frames[k];
        fr.h = fr.w = res;
        fr.t = k + 1;
        fr.pose = poses[k];
        fr.rgb.assign(static_cast<std::size_t>(res) * res * 3, 0.f);
        fr.depth.assign(static_cast<std::size_t>(res) * res, 0.f);
        fr.mask.assign(static_cast<std::size_t>(res) * res, 0);

        const Matrix3d rot = fr.pose.rotation();
        const Vector3d origin = fr.pose.tau;
        const int t_frame = fr.t;

        parallel_for(res, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t v = lo; v < hi; ++v)
                for (int u = 0; u < res; ++u) {
                    // unnormalized ray with unit camera-z, so the ray
                    // parameter equals camera-frame depth
                    Vector3d dir_cam((u - cx) / focal, (v - cy) / focal, 1.0);
                    Vector3d dir = rot * dir_cam;
                    Hit hit = cast_ray(world, t_frame, origin, dir);
                    std::size_t i = static_cast<std::size_t>(v) * res + u;
                    if (!std::isfinite(hit.t)) continue;
                    Vector3d color = hit.prim >= 0
                                         ? shade(world.prims[hit.prim], hit.point, hit.normal,
                                                 world.light)
                                         : back_plane_color(hit.point);
                    fr.rgb[i * 3 + 0] = static_cast<float>(color.x());
                    fr.rgb[i * 3 + 1] = static_cast<float>(color.y());
                    fr.rgb[i * 3 + 2] = static_cast<float>(color.z());
                    fr.depth[i] = static_cast<float>(hit.t);
                    fr.mask[i] = fr.depth[i] > 0.f ? 1 : 0;
                }
        });

        std::size_t valid = 0;
        for (auto m : fr.mask) valid += m;
        if (valid * 2 < fr.mask.size())
            throw GenerationError("scene: frame " + std::to_string(fr.t) +
                                  " has under 50% valid pixels");
    }
    return seq;
}

}  // namespace streampoint::gen
