#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relaynet {

using Point3 = Eigen::Vector3d;
using Vec3 = Eigen::Vector3d;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NotSeparable : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

struct Aabb {
    Point3 min = Point3::Zero();
    Point3 max = Point3::Zero();

    double distance_to(const Point3& p) const;
    bool contains(const Point3& p) const;
};

/// Static convex obstacle given as the hull of its vertices.
class ConvexObstacle {
public:
    ConvexObstacle() = default;
    /// Throws Error when fewer than 4 vertices are given or the hull is flat.
    ConvexObstacle(int id, std::vector<Point3> vertices);

    static ConvexObstacle box(int id, const Point3& lo, const Point3& hi);

    int id() const { return id_; }
    const std::vector<Point3>& vertices() const { return vertices_; }
    const Aabb& bounds() const { return bounds_; }

    /// max over vertices of dir . v
    double support(const Vec3& dir) const;

private:
    int id_ = 0;
    std::vector<Point3> vertices_;
    Aabb bounds_;
};

enum class Sense { GreaterEqual, LessEqual };

/// a . p >= b (or <= b) with |a| = 1.
struct HalfSpace {
    Vec3 normal = Vec3::UnitX();
    double offset = 0.0;
    Sense sense = Sense::GreaterEqual;

    /// Signed slack, non-negative when p satisfies the constraint.
    double slack(const Point3& p) const
    {
        const double v = normal.dot(p) - offset;
        return sense == Sense::GreaterEqual ? v : -v;
    }
};

struct Ball {
    Point3 center = Point3::Zero();
    double radius = 1.0;

    double slack(const Point3& p) const { return radius - (p - center).norm(); }
};

struct Separation {
    HalfSpace plane;  // free side is GreaterEqual
    double margin = 0.0;
};

/// Closest pair between conv(a) and conv(b).
struct HullDistance {
    double distance = 0.0;
    Point3 on_a = Point3::Zero();
    Point3 on_b = Point3::Zero();
};

HullDistance hull_distance(std::span<const Point3> a, std::span<const Point3> b);

/// Tolerance under which touching hulls still yield a plane (see separating_hyperplane).
inline constexpr double kTouchTolerance = 1e-5;

/// Max-margin plane with the free points on the GreaterEqual side and the
/// obstacle, inflated by `inflation`, on the other. margin = hull distance - inflation.
/// Throws NotSeparable when margin < -kTouchTolerance or the raw hulls overlap.
Separation separating_hyperplane(std::span<const Point3> free_points, const ConvexObstacle& obstacle,
                                 double inflation);

bool hulls_disjoint(std::span<const Point3> points, const ConvexObstacle& obstacle, double margin);

double segment_obstacle_distance(const Point3& p, const Point3& q, const ConvexObstacle& obstacle);

bool line_of_sight_clear(const Point3& p, const Point3& q, std::span<const ConvexObstacle> obstacles,
                         double margin);

/// Lower bound on the distance between conv(points) and the obstacle from bounding boxes.
double bounds_distance(std::span<const Point3> points, const ConvexObstacle& obstacle);

inline constexpr double kBisectionTolerance = 1e-4;
inline constexpr int kBisectionMaxIterations = 60;

/// Smallest s in [0, 1] with predicate(s) true, for predicates that stay true once
/// true. Throws Infeasible when predicate(1) is false.
double bisect_min(const std::function<bool(double)>& predicate, double tolerance = kBisectionTolerance);

}  // namespace relaynet
