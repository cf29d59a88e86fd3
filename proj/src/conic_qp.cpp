#include "relaynet/conic_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relaynet {

namespace cone {

namespace {

// J x for a single second-order cone block
Eigen::VectorXd reflect(const Eigen::VectorXd& x)
{
    Eigen::VectorXd out = -x;
    out(0) = x(0);
    return out;
}

double jnorm2(const Eigen::Ref<const Eigen::VectorXd>& x)
{
    return x(0) * x(0) - x.tail(x.size() - 1).squaredNorm();
}

}  // namespace

Eigen::VectorXd NtScaling::apply(const Eigen::VectorXd& x, int nonneg, const std::vector<int>& soc) const
{
    Eigen::VectorXd out(x.size());
    out.head(nonneg) = d.cwiseProduct(x.head(nonneg));
    Eigen::Index off = nonneg;
    for (std::size_t c = 0; c < soc.size(); ++c) {
        const Eigen::Index m = soc[c];
        const Eigen::VectorXd blk = x.segment(off, m);
        out.segment(off, m) = beta[c] * (2.0 * v[c] * v[c].dot(blk) - reflect(blk));
        off += m;
    }
    return out;
}

Eigen::VectorXd NtScaling::apply_inverse(const Eigen::VectorXd& x, int nonneg, const std::vector<int>& soc) const
{
    Eigen::VectorXd out(x.size());
    out.head(nonneg) = x.head(nonneg).cwiseQuotient(d);
    Eigen::Index off = nonneg;
    for (std::size_t c = 0; c < soc.size(); ++c) {
        const Eigen::Index m = soc[c];
        const Eigen::VectorXd blk = x.segment(off, m);
        const Eigen::VectorXd jv = reflect(v[c]);
        out.segment(off, m) = (2.0 * jv * jv.dot(blk) - reflect(blk)) / beta[c];
        off += m;
    }
    return out;
}

NtScaling nt_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, int nonneg, const std::vector<int>& soc)
{
    NtScaling w;
    w.d = (s.head(nonneg).array() / z.head(nonneg).array()).sqrt();
    Eigen::Index off = nonneg;
    for (const int m : soc) {
        const Eigen::VectorXd sb = s.segment(off, m);
        const Eigen::VectorXd zb = z.segment(off, m);
        const double sn = std::sqrt(jnorm2(sb));
        const double zn = std::sqrt(jnorm2(zb));
        const Eigen::VectorXd snorm = sb / sn;
        const Eigen::VectorXd znorm = zb / zn;
        const double gamma = std::sqrt(0.5 * (1.0 + snorm.dot(znorm)));
        Eigen::VectorXd wbar = (snorm + reflect(znorm)) / (2.0 * gamma);
        Eigen::VectorXd vv = wbar;
        vv(0) += 1.0;
        vv /= std::sqrt(2.0 * (wbar(0) + 1.0));
        w.beta.push_back(std::sqrt(sn / zn));
        w.v.push_back(std::move(vv));
        off += m;
    }
    return w;
}

double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d, int nonneg, const std::vector<int>& soc)
{
    double alpha = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < nonneg; ++i) {
        if (d(i) < 0.0) {
            alpha = std::min(alpha, -x(i) / d(i));
        }
    }
    Eigen::Index off = nonneg;
    for (const int m : soc) {
        const auto xb = x.segment(off, m);
        const auto db = d.segment(off, m);
        off += m;
        const double dnorm = db.tail(m - 1).norm();
        if (db(0) >= dnorm) {
            continue;  // direction inside the cone
        }
        const double qa = db(0) * db(0) - db.tail(m - 1).squaredNorm();
        const double qb = 2.0 * (xb(0) * db(0) - xb.tail(m - 1).dot(db.tail(m - 1)));
        const double qc = std::max(jnorm2(xb), 0.0);
        double root = std::numeric_limits<double>::infinity();
        if (std::abs(qa) < 1e-300) {
            if (qb < 0.0) {
                root = -qc / qb;
            }
        } else {
            const double disc = std::max(qb * qb - 4.0 * qa * qc, 0.0);
            const double sq = std::sqrt(disc);
            // numerically stable pair of roots
            const double t = -0.5 * (qb + (qb >= 0 ? sq : -sq));
            const double r1 = t / qa;
            const double r2 = t != 0.0 ? qc / t : std::numeric_limits<double>::infinity();
            for (const double r : {r1, r2}) {
                if (r >= 0.0 && r < root) {
                    root = r;
                }
            }
        }
        // the leading component must also stay non-negative
        if (db(0) < 0.0) {
            root = std::min(root, -xb(0) / db(0));
        }
        alpha = std::min(alpha, root);
    }
    return alpha;
}

}  // namespace cone

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kStallLimit = 12;
constexpr int kRefinementSteps = 2;

struct Layout {
    int nonneg;
    const std::vector<int>& soc;

    int degree() const { return nonneg + static_cast<int>(soc.size()); }
};

VectorXd identity(const Layout& c, Eigen::Index m)
{
    VectorXd e = VectorXd::Zero(m);
    e.head(c.nonneg).setOnes();
    Eigen::Index off = c.nonneg;
    for (const int k : c.soc) {
        e(off) = 1.0;
        off += k;
    }
    return e;
}

// smallest "eigenvalue" of x in the product cone
double min_eig(const VectorXd& x, const Layout& c)
{
    double out = std::numeric_limits<double>::infinity();
    if (c.nonneg > 0) {
        out = x.head(c.nonneg).minCoeff();
    }
    Eigen::Index off = c.nonneg;
    for (const int k : c.soc) {
        out = std::min(out, x(off) - x.segment(off + 1, k - 1).norm());
        off += k;
    }
    return out;
}

VectorXd jordan(const VectorXd& x, const VectorXd& y, const Layout& c)
{
    VectorXd out(x.size());
    out.head(c.nonneg) = x.head(c.nonneg).cwiseProduct(y.head(c.nonneg));
    Eigen::Index off = c.nonneg;
    for (const int k : c.soc) {
        const auto xb = x.segment(off, k);
        const auto yb = y.segment(off, k);
        out(off) = xb.dot(yb);
        out.segment(off + 1, k - 1) = xb(0) * yb.tail(k - 1) + yb(0) * xb.tail(k - 1);
        off += k;
    }
    return out;
}

// solves lambda o u = r
VectorXd jordan_solve(const VectorXd& lambda, const VectorXd& r, const Layout& c)
{
    VectorXd out(r.size());
    out.head(c.nonneg) = r.head(c.nonneg).cwiseQuotient(lambda.head(c.nonneg));
    Eigen::Index off = c.nonneg;
    for (const int k : c.soc) {
        const auto l = lambda.segment(off, k);
        const auto rb = r.segment(off, k);
        const double det = l(0) * l(0) - l.tail(k - 1).squaredNorm();
        const double u0 = (l(0) * rb(0) - l.tail(k - 1).dot(rb.tail(k - 1))) / det;
        out(off) = u0;
        out.segment(off + 1, k - 1) = (rb.tail(k - 1) - u0 * l.tail(k - 1)) / l(0);
        off += k;
    }
    return out;
}

MatrixXd scale_rows_inverse(const cone::NtScaling& w, const MatrixXd& G, const Layout& c)
{
    MatrixXd out(G.rows(), G.cols());
    out.topRows(c.nonneg) = w.d.cwiseInverse().asDiagonal() * G.topRows(c.nonneg);
    Eigen::Index off = c.nonneg;
    for (std::size_t i = 0; i < c.soc.size(); ++i) {
        const Eigen::Index k = c.soc[i];
        const auto blk = G.middleRows(off, k);
        VectorXd jv = -w.v[i];
        jv(0) = w.v[i](0);
        MatrixXd jblk = -blk;
        jblk.row(0) = blk.row(0);
        out.middleRows(off, k) = (2.0 * jv * (jv.transpose() * blk) - jblk) / w.beta[i];
        off += k;
    }
    return out;
}

// Factored reduced KKT system for one scaling.
class KktSolver {
public:
    KktSolver(const ConicQp& qp, const cone::NtScaling& w, const Layout& c) : qp_(qp), w_(w), c_(c)
    {
        gs_ = scale_rows_inverse(w, qp.G, c);
        const Eigen::Index n = qp.P.rows();
        const Eigen::Index p = qp.A.rows();
        MatrixXd k = MatrixXd::Zero(n + p, n + p);
        k.topLeftCorner(n, n) = qp.P;
        k.topLeftCorner(n, n).noalias() += gs_.transpose() * gs_;
        if (p > 0) {
            k.topRightCorner(n, p) = qp.A.transpose();
            k.bottomLeftCorner(p, n) = qp.A;
        }
        lu_.compute(k);
    }

    // Solves [P A' G'; A 0 0; G 0 -W'W] [dx; dy; dz] = [bx; by; bz].
    // Returns dx, dy and the scaled dz~ = W dz.
    void solve(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx, VectorXd& dy,
               VectorXd& dz_scaled) const
    {
        solve_once(bx, by, bz, dx, dy, dz_scaled);
        // iterative refinement against the unreduced system
        for (int r = 0; r < kRefinementSteps; ++r) {
            const VectorXd dz = w_.apply_inverse(dz_scaled, c_.nonneg, c_.soc);
            const VectorXd ex = bx - qp_.P * dx - qp_.A.transpose() * dy - qp_.G.transpose() * dz;
            const VectorXd ey = by - qp_.A * dx;
            const VectorXd ez = bz - qp_.G * dx + w_.apply(dz_scaled, c_.nonneg, c_.soc);
            VectorXd cx, cy, cz;
            solve_once(ex, ey, ez, cx, cy, cz);
            dx += cx;
            dy += cy;
            dz_scaled += cz;
        }
    }

private:
    void solve_once(const VectorXd& bx, const VectorXd& by, const VectorXd& bz, VectorXd& dx, VectorXd& dy,
                    VectorXd& dz_scaled) const
    {
        const Eigen::Index n = qp_.P.rows();
        const Eigen::Index p = qp_.A.rows();
        const VectorXd wbz = w_.apply_inverse(bz, c_.nonneg, c_.soc);
        VectorXd rhs(n + p);
        rhs.head(n) = bx + gs_.transpose() * wbz;
        if (p > 0) {
            rhs.tail(p) = by;
        }
        const VectorXd sol = lu_.solve(rhs);
        dx = sol.head(n);
        dy = sol.tail(p);
        dz_scaled = gs_ * dx - wbz;
    }

    const ConicQp& qp_;
    const cone::NtScaling& w_;
    Layout c_;
    MatrixXd gs_;
    Eigen::PartialPivLU<MatrixXd> lu_;
};

}  // namespace

ConicQpResult solve_conic_qp(const ConicQp& qp, const ConicQpOptions& options)
{
    const Eigen::Index n = qp.P.rows();
    const Eigen::Index m = qp.G.rows();
    const Eigen::Index p = qp.A.rows();
    const Layout c{qp.nonneg, qp.soc};
    ConicQpResult res;
    res.x = VectorXd::Zero(n);
    res.y = VectorXd::Zero(p);

    const VectorXd e = identity(c, m);
    VectorXd x;
    VectorXd y;
    VectorXd s;
    VectorXd z;

    // Initial point: least-squares slack with W = I, then shifted into the cone interior.
    {
        cone::NtScaling unit;
        unit.d = VectorXd::Ones(c.nonneg);
        for (const int k : c.soc) {
            VectorXd v = VectorXd::Zero(k);
            v(0) = 1.0;
            unit.beta.push_back(1.0);
            unit.v.push_back(v);
        }
        const KktSolver kkt(qp, unit, c);
        VectorXd dzs;
        kkt.solve(-qp.q, qp.b, qp.h, x, y, dzs);
        z = dzs;  // W = I so dz = G x - h
        s = -z;
        const double nrm_s = s.norm();
        const double ts = -min_eig(s, c);
        if (ts >= -1e-8 * std::max(nrm_s, 1.0)) {
            s += (1.0 + ts) * e;
        }
        const double nrm_z = z.norm();
        const double tz = -min_eig(z, c);
        if (tz >= -1e-8 * std::max(nrm_z, 1.0)) {
            z += (1.0 + tz) * e;
        }
    }

    const double qnorm = std::max(1.0, qp.q.norm());
    const int degree = std::max(c.degree(), 1);

    // best iterate so far, returned with reduced accuracy when the method stalls
    struct Best {
        double merit = std::numeric_limits<double>::infinity();
        bool acceptable = false;
        VectorXd x, y, s, z;
        double pcost = 0.0;
    } best;
    int stall = 0;

    auto finish = [&](ConicQpStatus failure) {
        if (best.acceptable) {
            res.status = ConicQpStatus::Inaccurate;
            res.x = best.x;
            res.y = best.y;
            res.s = best.s;
            res.z = best.z;
            res.objective = best.pcost;
        } else {
            res.status = failure;
            res.x = x;
            res.y = y;
            res.s = s;
            res.z = z;
        }
        return res;
    };

    for (int it = 0; it <= options.max_iterations; ++it) {
        const VectorXd rx = qp.P * x + qp.q + qp.A.transpose() * y + qp.G.transpose() * z;
        const VectorXd ry = qp.A * x - qp.b;
        const VectorXd rz = qp.G * x + s - qp.h;
        const double gap = s.dot(z);
        const double mu = gap / degree;
        const double pcost = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
        const double pres = std::max(ry.size() ? ry.lpNorm<Eigen::Infinity>() : 0.0,
                                     rz.size() ? rz.lpNorm<Eigen::Infinity>() : 0.0);
        // dual residual relative to the largest term in the stationarity sum
        const double dscale = std::max({qnorm, (qp.P * x).norm(), (qp.A.transpose() * y).norm(),
                                        (qp.G.transpose() * z).norm()});
        const double dres = rx.norm() / dscale;
        const double gap_scale = std::max(1.0, std::abs(pcost));

        res.iterations = it;
        if (!std::isfinite(gap) || !std::isfinite(pres) || !std::isfinite(dres)) {
            return finish(ConicQpStatus::NumericalError);
        }
        if (pres <= options.feasibility_tolerance && dres <= options.tolerance &&
            gap <= options.tolerance * gap_scale) {
            res.status = ConicQpStatus::Optimal;
            res.x = x;
            res.y = y;
            res.s = s;
            res.z = z;
            res.objective = pcost;
            return res;
        }
        const double merit = std::max({pres / options.feasibility_tolerance, dres / options.tolerance,
                                       gap / (options.tolerance * gap_scale)});
        if (merit < best.merit) {
            if (merit < 0.5 * best.merit) {
                stall = 0;
            }
            best.merit = merit;
            best.acceptable = pres <= options.feasibility_tolerance && dres <= options.reduced_tolerance &&
                              gap <= options.reduced_tolerance * gap_scale;
            best.x = x;
            best.y = y;
            best.s = s;
            best.z = z;
            best.pcost = pcost;
        }
        if (it == options.max_iterations) {
            break;
        }
        if (++stall > kStallLimit) {
            return finish(ConicQpStatus::NumericalError);
        }

        const cone::NtScaling w = cone::nt_scaling(s, z, c.nonneg, c.soc);
        const VectorXd lambda = w.apply(z, c.nonneg, c.soc);
        const KktSolver kkt(qp, w, c);

        auto direction = [&](const VectorXd& rhs_s, VectorXd& dx, VectorXd& dy, VectorXd& ds, VectorXd& dz,
                             VectorXd& ds_scaled, VectorXd& dz_scaled) {
            const VectorXd lhs = jordan_solve(lambda, rhs_s, c);
            const VectorXd bz = -rz - w.apply(lhs, c.nonneg, c.soc);
            kkt.solve(-rx, -ry, bz, dx, dy, dz_scaled);
            ds_scaled = lhs - dz_scaled;
            ds = w.apply(ds_scaled, c.nonneg, c.soc);
            dz = w.apply_inverse(dz_scaled, c.nonneg, c.soc);
        };

        VectorXd dx, dy, ds, dz, dss, dzs;
        const VectorXd ll = jordan(lambda, lambda, c);
        direction(-ll, dx, dy, ds, dz, dss, dzs);
        const double a_aff = std::min({1.0, cone::max_step(s, ds, c.nonneg, c.soc),
                                       cone::max_step(z, dz, c.nonneg, c.soc)});
        const double sigma = std::pow(std::clamp(1.0 - a_aff, 0.0, 1.0), 3);

        const VectorXd rhs_c = -ll - jordan(dss, dzs, c) + sigma * mu * e;
        direction(rhs_c, dx, dy, ds, dz, dss, dzs);
        double alpha = std::min(cone::max_step(s, ds, c.nonneg, c.soc), cone::max_step(z, dz, c.nonneg, c.soc));
        alpha = std::min(1.0, 0.99 * alpha);
        if (!(alpha > 1e-12) || !dx.allFinite()) {
            return finish(ConicQpStatus::NumericalError);
        }
        x += alpha * dx;
        y += alpha * dy;
        s += alpha * ds;
        z += alpha * dz;
    }

    return finish(ConicQpStatus::MaxIterations);
}

}  // namespace relaynet
