#pragma once

// Brute-force reference computations used only by tests. Nothing here calls
// into the library's geometry routines.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

using V3 = Eigen::Vector3d;

inline double point_box_distance(const V3& p, const V3& lo, const V3& hi)
{
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = std::max({lo[i] - p[i], 0.0, p[i] - hi[i]});
        s += d * d;
    }
    return std::sqrt(s);
}

inline double point_segment_distance(const V3& p, const V3& a, const V3& b)
{
    const V3 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

inline double point_triangle_distance(const V3& p, const V3& a, const V3& b, const V3& c)
{
    const V3 n = (b - a).cross(c - a);
    double best = std::min({point_segment_distance(p, a, b), point_segment_distance(p, b, c),
                            point_segment_distance(p, c, a)});
    if (n.norm() < 1e-14) {
        return best;
    }
    const V3 nu = n.normalized();
    const V3 proj = p - nu * nu.dot(p - a);
    // barycentric inside test via same-side signs
    const double s1 = (b - a).cross(proj - a).dot(n);
    const double s2 = (c - b).cross(proj - b).dot(n);
    const double s3 = (a - c).cross(proj - c).dot(n);
    if (s1 >= 0 && s2 >= 0 && s3 >= 0) {
        best = std::min(best, std::abs(nu.dot(p - a)));
    }
    return best;
}

/// Distance from p to conv(verts) by enumerating every vertex triple as a candidate
/// facet; 0 when p lies inside.
inline double point_polytope_distance(const V3& p, const std::vector<V3>& verts)
{
    const std::size_t n = verts.size();
    bool inside = true;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                const V3 nrm = (verts[j] - verts[i]).cross(verts[k] - verts[i]);
                if (nrm.norm() < 1e-12) {
                    continue;
                }
                int pos = 0;
                int neg = 0;
                for (std::size_t m = 0; m < n; ++m) {
                    const double s = nrm.dot(verts[m] - verts[i]);
                    if (s > 1e-12) {
                        ++pos;
                    } else if (s < -1e-12) {
                        ++neg;
                    }
                }
                if (pos > 0 && neg > 0) {
                    continue;  // not a facet
                }
                const V3 outward = pos > 0 ? V3(-nrm) : nrm;
                if (outward.dot(p - verts[i]) > 0) {
                    inside = false;
                }
                best = std::min(best, point_triangle_distance(p, verts[i], verts[j], verts[k]));
            }
        }
    }
    return inside ? 0.0 : best;
}

/// Minimizes a convex scalar function on [0, 1] by ternary search.
inline double ternary_min(const std::function<double(double)>& f)
{
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3;
        const double m2 = hi - (hi - lo) / 3;
        if (f(m1) <= f(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    return f(0.5 * (lo + hi));
}

inline double segment_box_distance(const V3& p, const V3& q, const V3& lo, const V3& hi)
{
    return ternary_min([&](double t) { return point_box_distance(p + t * (q - p), lo, hi); });
}

}  // namespace oracle
