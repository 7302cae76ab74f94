#include "streampoint/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace streampoint::eval {

const char* depth_align_str(DepthAlign a) {
    switch (a) {
        case DepthAlign::PerFrameMedian: return "per-frame-median";
        case DepthAlign::PerSequenceScale: return "per-sequence-scale";
        case DepthAlign::MetricNone: return "metric-none";
    }
    throw ContractError("depth_align_str: bad enum");
}

DepthAlign depth_align_parse(const std::string& s) {
    if (s == "median" || s == "per-frame-median") return DepthAlign::PerFrameMedian;
    if (s == "sequence" || s == "per-sequence-scale") return DepthAlign::PerSequenceScale;
    if (s == "none" || s == "metric-none") return DepthAlign::MetricNone;
    throw ConfigError("unknown depth alignment: " + s);
}

double median(std::vector<double> v) {
    if (v.empty()) throw DegenerateError("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + mid);
    return lo + (hi - lo) / 2;
}

DepthMetrics depth_metrics(const std::vector<std::vector<float>>& pred,
                           const std::vector<std::vector<float>>& gt,
                           const std::vector<geo::Mask>& masks, DepthAlign mode) {
    const std::size_t n = pred.size();
    if (n == 0 || gt.size() != n || masks.size() != n)
        throw ShapeError("depth_metrics: frame count mismatch");
    for (std::size_t f = 0; f < n; ++f)
        if (pred[f].size() != gt[f].size() || masks[f].size() != gt[f].size())
            throw ShapeError("depth_metrics: pixel count mismatch at frame " +
                             std::to_string(f));

    // One scale per frame; identical across frames unless per-frame mode.
    std::vector<double> scale(n, 1.0);
    if (mode == DepthAlign::PerFrameMedian) {
        for (std::size_t f = 0; f < n; ++f) {
            std::vector<double> dp, dg;
            for (std::size_t i = 0; i < gt[f].size(); ++i)
                if (masks[f][i]) {
                    dp.push_back(pred[f][i]);
                    dg.push_back(gt[f][i]);
                }
            if (dg.empty()) throw DegenerateError("depth_metrics: frame without valid pixels");
            const double mp = median(dp), mg = median(dg);
            if (!(mp > 0) || !(mg > 0))
                throw DegenerateError("depth_metrics: non-positive median depth");
            scale[f] = mg / mp;
        }
    } else if (mode == DepthAlign::PerSequenceScale) {
        std::vector<double> ratios;
        for (std::size_t f = 0; f < n; ++f) {
            bool any = false;
            for (std::size_t i = 0; i < gt[f].size(); ++i)
                if (masks[f][i]) {
                    any = true;
                    if (pred[f][i] > 0)
                        ratios.push_back(static_cast<double>(gt[f][i]) / pred[f][i]);
                }
            if (!any) throw DegenerateError("depth_metrics: frame without valid pixels");
        }
        if (ratios.empty())
            throw DegenerateError("depth_metrics: no positive predictions to fit a scale");
        const double s = median(ratios);
        if (!(s > 0)) throw DegenerateError("depth_metrics: non-positive sequence scale");
        std::fill(scale.begin(), scale.end(), s);
    } else {
        for (std::size_t f = 0; f < n; ++f) {
            bool any = false;
            for (std::size_t i = 0; i < gt[f].size(); ++i)
                if (masks[f][i]) any = true;
            if (!any) throw DegenerateError("depth_metrics: frame without valid pixels");
        }
    }

    double abs_rel_sum = 0, inliers = 0, count = 0;
    for (std::size_t f = 0; f < n; ++f)
        for (std::size_t i = 0; i < gt[f].size(); ++i) {
            if (!masks[f][i]) continue;
            const double d = gt[f][i];
            if (!(d > 0)) throw ContractError("depth_metrics: non-positive gt at valid pixel");
            const double dp = scale[f] * pred[f][i];
            abs_rel_sum += std::abs(dp - d) / d;
            if (dp > 0 && std::max(dp / d, d / dp) < 1.25) inliers += 1;
            count += 1;
        }

    DepthMetrics m;
    m.alignment = mode;
    m.abs_rel = abs_rel_sum / count;
    m.delta_125 = inliers / count;
    return m;
}

PoseMetrics pose_metrics(const std::vector<geo::CameraPose>& pred,
                         const std::vector<geo::CameraPose>& gt) {
    const std::size_t n = pred.size();
    if (n != gt.size()) throw ShapeError("pose_metrics: trajectory length mismatch");
    if (n < 3) throw ContractError("pose_metrics: need at least 3 poses");

    std::vector<geo::Vector3d> cp(n), cg(n);
    for (std::size_t i = 0; i < n; ++i) {
        cp[i] = pred[i].tau;
        cg[i] = gt[i].tau;
    }
    PoseMetrics m;
    m.alignment = geo::umeyama_sim3(cp, cg);

    double se = 0;
    std::vector<geo::Vector3d> ap(n);
    for (std::size_t i = 0; i < n; ++i) {
        ap[i] = m.alignment.apply(cp[i]);
        se += (ap[i] - cg[i]).squaredNorm();
    }
    m.ate = std::sqrt(se / static_cast<double>(n));

    double te = 0, re = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        te += ((ap[i + 1] - ap[i]) - (cg[i + 1] - cg[i])).norm();
        const geo::Quat rp = geo::matrix_to_quat(pred[i].rotation().transpose() *
                                                 pred[i + 1].rotation());
        const geo::Quat rg = geo::matrix_to_quat(gt[i].rotation().transpose() *
                                                 gt[i + 1].rotation());
        re += geo::quat_geodesic_deg(rp, rg);
    }
    m.rpe_trans = te / static_cast<double>(n - 1);
    m.rpe_rot = re / static_cast<double>(n - 1);
    return m;
}

PointCloud cloud_from_pointmap(const geo::Pointmap& pm, const geo::Mask& mask) {
    if (mask.size() != pm.count()) throw ShapeError("cloud_from_pointmap: mask size");
    PointCloud c;
    auto valid = [&](int y, int x) {
        return y >= 0 && y < pm.h && x >= 0 && x < pm.w &&
               mask[static_cast<std::size_t>(y) * pm.w + x];
    };
    for (int y = 0; y < pm.h; ++y)
        for (int x = 0; x < pm.w; ++x) {
            if (!valid(y, x)) continue;
            const float* p = pm.at(y, x);
            c.points.emplace_back(p[0], p[1], p[2]);
            geo::Vector3d nrm = geo::Vector3d::Zero();
            std::uint8_t has = 0;
            if (valid(y, x - 1) && valid(y, x + 1) && valid(y - 1, x) && valid(y + 1, x)) {
                auto v3 = [&](int yy, int xx) {
                    const float* q = pm.at(yy, xx);
                    return geo::Vector3d(q[0], q[1], q[2]);
                };
                const geo::Vector3d dx = v3(y, x + 1) - v3(y, x - 1);
                const geo::Vector3d dy = v3(y + 1, x) - v3(y - 1, x);
                geo::Vector3d cr = dx.cross(dy);
                const double len = cr.norm();
                if (len > 1e-12) {
                    nrm = cr / len;
                    has = 1;
                }
            }
            c.normals.push_back(nrm);
            c.has_normal.push_back(has);
        }
    return c;
}

std::vector<int> nearest_neighbors_brute(const std::vector<geo::Vector3d>& queries,
                                         const std::vector<geo::Vector3d>& points) {
    if (points.empty()) throw DegenerateError("nearest_neighbors: empty point set");
    std::vector<int> out(queries.size(), 0);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        double best = std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double d = (points[i] - queries[qi]).squaredNorm();
            if (d < best) {
                best = d;
                best_i = static_cast<int>(i);
            }
        }
        out[qi] = best_i;
    }
    return out;
}

namespace {

// Uniform grid over the point bbox. Cell coordinates are clamped into the
// grid, so queries outside the bbox start at the nearest boundary cell;
// the shell margin bound below stays valid because it measures distance to
// the shell box directly from the query.
struct GridIndex {
    geo::Vector3d lo;
    double cell = 1;
    int nx = 1, ny = 1, nz = 1;
    std::unordered_map<std::uint64_t, std::vector<int>> cells;

    explicit GridIndex(const std::vector<geo::Vector3d>& pts) {
        geo::Vector3d hi = pts[0];
        lo = pts[0];
        for (const auto& p : pts) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double extent = (hi - lo).maxCoeff();
        const double target = std::cbrt(static_cast<double>(pts.size()));
        cell = std::max(extent / std::max(1.0, target), 1e-12);
        auto dim = [&](double span) {
            int d = static_cast<int>(span / cell) + 1;
            return std::min(d, 1 << 20);
        };
        nx = dim(hi.x() - lo.x());
        ny = dim(hi.y() - lo.y());
        nz = dim(hi.z() - lo.z());
        for (std::size_t i = 0; i < pts.size(); ++i)
            cells[key(coord(pts[i]))].push_back(static_cast<int>(i));
    }

    struct Coord {
        int x, y, z;
    };
    Coord coord(const geo::Vector3d& p) const {
        auto q = [&](double v, double l, int nmax) {
            const int c = static_cast<int>(std::floor((v - l) / cell));
            return std::clamp(c, 0, nmax - 1);
        };
        return {q(p.x(), lo.x(), nx), q(p.y(), lo.y(), ny), q(p.z(), lo.z(), nz)};
    }
    static std::uint64_t key(Coord c) {
        return (static_cast<std::uint64_t>(c.x) << 42) |
               (static_cast<std::uint64_t>(c.y) << 21) | static_cast<std::uint64_t>(c.z);
    }
};

}  // namespace

std::vector<int> nearest_neighbors(const std::vector<geo::Vector3d>& queries,
                                   const std::vector<geo::Vector3d>& points) {
    if (points.empty()) throw DegenerateError("nearest_neighbors: empty point set");
    GridIndex grid(points);
    const int max_shell = std::max({grid.nx, grid.ny, grid.nz});

    std::vector<int> out(queries.size(), 0);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const geo::Vector3d& q = queries[qi];
        const auto c = grid.coord(q);
        double best = std::numeric_limits<double>::infinity();
        int best_i = -1;

        auto scan_cell = [&](int x, int y, int z) {
            if (x < 0 || x >= grid.nx || y < 0 || y >= grid.ny || z < 0 || z >= grid.nz)
                return;
            auto it = grid.cells.find(GridIndex::key({x, y, z}));
            if (it == grid.cells.end()) return;
            for (int i : it->second) {
                const double d = (points[i] - q).squaredNorm();
                if (d < best || (d == best && i < best_i)) {
                    best = d;
                    best_i = i;
                }
            }
        };

        for (int s = 0; s <= max_shell; ++s) {
            if (s == 0) {
                scan_cell(c.x, c.y, c.z);
            } else {
                for (int x = c.x - s; x <= c.x + s; ++x)
                    for (int y = c.y - s; y <= c.y + s; ++y)
                        for (int z = c.z - s; z <= c.z + s; ++z) {
                            const int ring = std::max(
                                {std::abs(x - c.x), std::abs(y - c.y), std::abs(z - c.z)});
                            if (ring == s) scan_cell(x, y, z);
                        }
            }
            if (best_i < 0) continue;
            // Every unscanned point lies outside the box of cells within
            // Chebyshev distance s; if the query's distance to that box
            // boundary already exceeds the best match, no unscanned point
            // can beat it or tie with a lower index.
            const double bx0 = grid.lo.x() + (c.x - s) * grid.cell;
            const double bx1 = grid.lo.x() + (c.x + s + 1) * grid.cell;
            const double by0 = grid.lo.y() + (c.y - s) * grid.cell;
            const double by1 = grid.lo.y() + (c.y + s + 1) * grid.cell;
            const double bz0 = grid.lo.z() + (c.z - s) * grid.cell;
            const double bz1 = grid.lo.z() + (c.z + s + 1) * grid.cell;
            const double margin =
                std::min({q.x() - bx0, bx1 - q.x(), q.y() - by0, by1 - q.y(), q.z() - bz0,
                          bz1 - q.z()});
            if (margin > 0 && best < margin * margin) break;
        }
        if (best_i < 0) throw ContractError("nearest_neighbors: search failed");
        out[qi] = best_i;
    }
    return out;
}

namespace {

void directed_distances(const std::vector<geo::Vector3d>& from,
                        const std::vector<geo::Vector3d>& to, const std::vector<int>& nn,
                        double* mean_out, double* median_out) {
    std::vector<double> d(from.size());
    double sum = 0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        d[i] = (from[i] - to[nn[i]]).norm();
        sum += d[i];
    }
    *mean_out = sum / static_cast<double>(d.size());
    *median_out = median(std::move(d));
}

}  // namespace

ReconMetrics recon_metrics(const PointCloud& pred, const PointCloud& gt) {
    if (pred.points.empty() || gt.points.empty())
        throw DegenerateError("recon_metrics: empty cloud");
    if (pred.normals.size() != pred.points.size() ||
        pred.has_normal.size() != pred.points.size() ||
        gt.normals.size() != gt.points.size() || gt.has_normal.size() != gt.points.size())
        throw ShapeError("recon_metrics: normals not parallel to points");

    const auto nn_pg = nearest_neighbors(pred.points, gt.points);
    const auto nn_gp = nearest_neighbors(gt.points, pred.points);

    ReconMetrics m;
    directed_distances(pred.points, gt.points, nn_pg, &m.acc_mean, &m.acc_median);
    directed_distances(gt.points, pred.points, nn_gp, &m.comp_mean, &m.comp_median);

    std::vector<double> agree;
    for (std::size_t i = 0; i < pred.points.size(); ++i) {
        const int j = nn_pg[i];
        if (!pred.has_normal[i] || !gt.has_normal[j]) continue;
        const geo::Vector3d& a = pred.normals[i];
        const geo::Vector3d& b = gt.normals[j];
        // identical normals agree exactly; the dot product would only add
        // rounding noise around 1
        agree.push_back(a == b ? 1.0 : std::min(std::abs(a.dot(b)), 1.0));
    }
    if (!agree.empty()) {
        double sum = 0;
        for (double v : agree) sum += v;
        m.nc_mean = sum / static_cast<double>(agree.size());
        m.nc_median = median(std::move(agree));
        m.nc_defined = true;
    }
    return m;
}

}  // namespace streampoint::eval
