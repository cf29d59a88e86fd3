#include "relaynet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relaynet {

double Aabb::distance_to(const Point3& p) const
{
    const Vec3 clamped = p.cwiseMax(min).cwiseMin(max);
    return (p - clamped).norm();
}

bool Aabb::contains(const Point3& p) const
{
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

ConvexObstacle::ConvexObstacle(int id, std::vector<Point3> vertices) : id_(id), vertices_(std::move(vertices))
{
    if (vertices_.size() < 4) {
        throw Error("obstacle " + std::to_string(id_) + ": needs at least 4 vertices");
    }
    for (const auto& v : vertices_) {
        if (!v.allFinite()) {
            throw Error("obstacle " + std::to_string(id_) + ": non-finite vertex");
        }
    }
    Eigen::MatrixXd spread(3, static_cast<Eigen::Index>(vertices_.size() - 1));
    for (std::size_t i = 1; i < vertices_.size(); ++i) {
        spread.col(static_cast<Eigen::Index>(i - 1)) = vertices_[i] - vertices_[0];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(spread);
    const auto& sv = svd.singularValues();
    if (sv.size() < 3 || sv(0) <= 0.0 || sv(2) < 1e-9 * sv(0)) {
        throw Error("obstacle " + std::to_string(id_) + ": degenerate hull (zero volume)");
    }
    bounds_.min = vertices_[0];
    bounds_.max = vertices_[0];
    for (const auto& v : vertices_) {
        bounds_.min = bounds_.min.cwiseMin(v);
        bounds_.max = bounds_.max.cwiseMax(v);
    }
}

ConvexObstacle ConvexObstacle::box(int id, const Point3& lo, const Point3& hi)
{
    std::vector<Point3> corners;
    corners.reserve(8);
    for (int mask = 0; mask < 8; ++mask) {
        corners.emplace_back((mask & 1) ? hi.x() : lo.x(), (mask & 2) ? hi.y() : lo.y(),
                             (mask & 4) ? hi.z() : lo.z());
    }
    return ConvexObstacle(id, std::move(corners));
}

double ConvexObstacle::support(const Vec3& dir) const
{
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : vertices_) {
        best = std::max(best, dir.dot(v));
    }
    return best;
}

namespace {

// Wolfe's minimum-norm-point algorithm over the Minkowski difference a_i - b_j.
// The corral holds at most 4 affinely independent points in R^3.
struct Corral {
    std::vector<int> idx;
    std::vector<double> weight;
};

bool affine_min_norm(const std::vector<Vec3>& pts, const std::vector<int>& idx, Eigen::VectorXd& alpha)
{
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            kkt(i, j) = pts[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].dot(
                pts[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])]);
        }
        kkt(i, n) = 1.0;
        kkt(n, i) = 1.0;
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
    rhs(n) = 1.0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible()) {
        return false;
    }
    alpha = lu.solve(rhs).head(n);
    return alpha.allFinite();
}

}  // namespace

HullDistance hull_distance(std::span<const Point3> a, std::span<const Point3> b)
{
    if (a.empty() || b.empty()) {
        throw Error("hull_distance: empty point set");
    }
    std::vector<Vec3> diff;
    diff.reserve(a.size() * b.size());
    double scale = 0.0;
    for (const auto& pa : a) {
        for (const auto& pb : b) {
            diff.push_back(pa - pb);
            scale = std::max(scale, diff.back().squaredNorm());
        }
    }
    const auto nb = static_cast<int>(b.size());

    auto combine = [&](const Corral& c) {
        Vec3 x = Vec3::Zero();
        for (std::size_t i = 0; i < c.idx.size(); ++i) {
            x += c.weight[i] * diff[static_cast<std::size_t>(c.idx[i])];
        }
        return x;
    };

    Corral corral;
    {
        int best = 0;
        for (int i = 1; i < static_cast<int>(diff.size()); ++i) {
            if (diff[static_cast<std::size_t>(i)].squaredNorm() < diff[static_cast<std::size_t>(best)].squaredNorm()) {
                best = i;
            }
        }
        corral.idx = {best};
        corral.weight = {1.0};
    }
    Vec3 x = combine(corral);
    const double eps = 1e-13 * std::max(scale, 1e-300);

    for (int major = 0; major < 200; ++major) {
        if (x.squaredNorm() <= eps) {
            break;
        }
        int j = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(diff.size()); ++i) {
            const double v = x.dot(diff[static_cast<std::size_t>(i)]);
            if (v < best) {
                best = v;
                j = i;
            }
        }
        if (x.squaredNorm() - best <= 1e-12 * std::max(x.squaredNorm(), eps) ||
            std::find(corral.idx.begin(), corral.idx.end(), j) != corral.idx.end() || corral.idx.size() >= 4) {
            break;
        }
        corral.idx.push_back(j);
        corral.weight.push_back(0.0);

        for (int minor = 0; minor < 16; ++minor) {
            Eigen::VectorXd alpha;
            if (!affine_min_norm(diff, corral.idx, alpha)) {
                // affinely dependent corral: drop the newest point and finish
                corral.idx.pop_back();
                corral.weight.pop_back();
                major = 1 << 20;
                break;
            }
            if ((alpha.array() > 1e-14).all()) {
                for (std::size_t i = 0; i < corral.idx.size(); ++i) {
                    corral.weight[i] = alpha(static_cast<Eigen::Index>(i));
                }
                break;
            }
            double theta = 1.0;
            for (std::size_t i = 0; i < corral.idx.size(); ++i) {
                const double ai = alpha(static_cast<Eigen::Index>(i));
                if (ai <= 1e-14 && corral.weight[i] - ai > 0.0) {
                    theta = std::min(theta, corral.weight[i] / (corral.weight[i] - ai));
                }
            }
            for (std::size_t i = 0; i < corral.idx.size(); ++i) {
                corral.weight[i] = theta * alpha(static_cast<Eigen::Index>(i)) + (1.0 - theta) * corral.weight[i];
            }
            Corral kept;
            for (std::size_t i = 0; i < corral.idx.size(); ++i) {
                if (corral.weight[i] > 1e-14) {
                    kept.idx.push_back(corral.idx[i]);
                    kept.weight.push_back(corral.weight[i]);
                }
            }
            double total = 0.0;
            for (double w : kept.weight) {
                total += w;
            }
            for (double& w : kept.weight) {
                w /= total;
            }
            corral = std::move(kept);
        }
        const Vec3 next = combine(corral);
        const bool stalled = next.squaredNorm() >= x.squaredNorm();
        x = next;
        if (stalled) {
            break;
        }
    }

    HullDistance out;
    out.on_a = Point3::Zero();
    out.on_b = Point3::Zero();
    for (std::size_t i = 0; i < corral.idx.size(); ++i) {
        const int k = corral.idx[i];
        out.on_a += corral.weight[i] * a[static_cast<std::size_t>(k / nb)];
        out.on_b += corral.weight[i] * b[static_cast<std::size_t>(k % nb)];
    }
    out.distance = x.squaredNorm() <= eps ? 0.0 : x.norm();
    return out;
}

Separation separating_hyperplane(std::span<const Point3> free_points, const ConvexObstacle& obstacle,
                                 double inflation)
{
    if (free_points.empty()) {
        throw Error("separating_hyperplane: no free points");
    }
    if (inflation < 0.0) {
        throw Error("separating_hyperplane: negative inflation");
    }
    const HullDistance hd = hull_distance(free_points, obstacle.vertices());
    if (hd.distance <= 0.0) {
        throw NotSeparable("free hull intersects obstacle " + std::to_string(obstacle.id()));
    }
    Vec3 normal = hd.on_a - hd.on_b;
    normal /= normal.norm();
    const double support = obstacle.support(normal);
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& p : free_points) {
        lowest = std::min(lowest, normal.dot(p));
    }
    Separation out;
    out.plane = HalfSpace{normal, support + inflation, Sense::GreaterEqual};
    out.margin = lowest - support - inflation;
    if (out.margin < -kTouchTolerance) {
        throw NotSeparable("free hull within inflation of obstacle " + std::to_string(obstacle.id()));
    }
    return out;
}

bool hulls_disjoint(std::span<const Point3> points, const ConvexObstacle& obstacle, double margin)
{
    const HullDistance hd = hull_distance(points, obstacle.vertices());
    if (hd.distance <= 0.0) {
        return false;
    }
    // gap certified by the plane through the closest pair; never above hd.distance
    const Vec3 normal = (hd.on_a - hd.on_b).normalized();
    double lowest = std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        lowest = std::min(lowest, normal.dot(p));
    }
    return lowest - obstacle.support(normal) >= margin;
}

double segment_obstacle_distance(const Point3& p, const Point3& q, const ConvexObstacle& obstacle)
{
    const Point3 seg[2] = {p, q};
    return hull_distance(seg, obstacle.vertices()).distance;
}

double bounds_distance(std::span<const Point3> points, const ConvexObstacle& obstacle)
{
    Point3 lo = points.front();
    Point3 hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Aabb& ob = obstacle.bounds();
    const Vec3 gap = (ob.min - hi).cwiseMax(lo - ob.max).cwiseMax(0.0);
    return gap.norm();
}

bool line_of_sight_clear(const Point3& p, const Point3& q, std::span<const ConvexObstacle> obstacles,
                         double margin)
{
    const Point3 seg[2] = {p, q};
    for (const auto& o : obstacles) {
        if (bounds_distance(seg, o) > margin) {
            continue;
        }
        const double d = segment_obstacle_distance(p, q, o);
        if (d <= 0.0 || d < margin) {
            return false;
        }
    }
    return true;
}

double bisect_min(const std::function<bool(double)>& predicate, double tolerance)
{
    if (predicate(0.0)) {
        return 0.0;
    }
    if (!predicate(1.0)) {
        throw Infeasible("bisect_min: predicate false at upper end");
    }
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < kBisectionMaxIterations && hi - lo > tolerance; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (predicate(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

}  // namespace relaynet
