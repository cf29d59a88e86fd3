#include "relaynet/mpc.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace relaynet {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// clearance predicates accept hulls this close to the inflated boundary
constexpr double kClearTolerance = 5e-6;

bool near(std::span<const Point3> pts, const ConvexObstacle& o, double range)
{
    return bounds_distance(pts, o) <= range;
}

// p_k = p0 + k h v0 + sum_{j<k} h^2 (k - j - 1/2) u_j
MatrixXd position_map(int k, int K, double h)
{
    MatrixXd S = MatrixXd::Zero(3, 3 * K);
    for (int j = 0; j < k; ++j) {
        S.block<3, 3>(0, 3 * j) = Eigen::Matrix3d::Identity() * (h * h * (k - j - 0.5));
    }
    return S;
}

// v_k = v0 + h sum_{j<k} u_j
MatrixXd velocity_map(int k, int K, double h)
{
    MatrixXd S = MatrixXd::Zero(3, 3 * K);
    for (int j = 0; j < k; ++j) {
        S.block<3, 3>(0, 3 * j) = Eigen::Matrix3d::Identity() * h;
    }
    return S;
}

// adds w/2 |M u + r|^2
void add_square(MatrixXd& P, VectorXd& q, const MatrixXd& M, const Vec3& r, double w)
{
    P.noalias() += w * M.transpose() * M;
    q.noalias() += w * M.transpose() * r;
}

Trajectory recover_inputs(const AgentState& state, const Trajectory& predetermined, double h)
{
    Trajectory out = predetermined;
    out.kind = TrajectoryKind::Planned;
    const int K = predetermined.horizon();
    out.inputs.assign(K, Vec3::Zero());
    Vec3 prev = state.v;
    for (int k = 0; k < K; ++k) {
        out.inputs[k] = (predetermined.velocities[k] - prev) / h;
        prev = predetermined.velocities[k];
    }
    return out;
}

}  // namespace

Trajectory Trajectory::hold(const AgentState& s, int K)
{
    Trajectory t;
    t.positions.assign(K, s.p);
    t.velocities.assign(K, s.v);
    t.inputs.assign(K, Vec3::Zero());
    t.kind = TrajectoryKind::Predetermined;
    return t;
}

Trajectory Trajectory::rollout(const AgentState& start, const std::vector<Vec3>& inputs, double h)
{
    Trajectory t;
    t.inputs = inputs;
    AgentState x = start;
    for (const auto& u : inputs) {
        x = propagate(x, u, h);
        t.positions.push_back(x.p);
        t.velocities.push_back(x.v);
    }
    return t;
}

double MpcParams::q_weight(int k) const
{
    if (Q.empty()) {
        return k < K ? 1.0 : 10.0;
    }
    return Q.at(k - 1);
}

double MpcParams::r_min() const
{
    return std::sqrt(4.0 * r_a * r_a + h * h * v_max * v_max);
}

double MpcParams::speed_bound() const
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(theta_v);
    return v_max / es.eigenvalues().minCoeff();
}

double MpcParams::obstacle_range() const
{
    return std::max(d_c, 2.0 * speed_bound() * K * h);
}

void MpcParams::validate() const
{
    auto fail = [](const std::string& m) { throw Error("invalid mpc parameters: " + m); };
    if (!(h > 0.0)) fail("h must be positive");
    if (K < 1) fail("K must be at least 1");
    if (!(a_max > 0.0) || !(v_max > 0.0)) fail("a_max and v_max must be positive");
    if (!(r_a > 0.0)) fail("r_a must be positive");
    if (!(d_w > 0.0) || !(d_w < d_c)) fail("need 0 < d_w < d_c");
    if (!(d_m > 0.0)) fail("d_m must be positive");
    if (!Q.empty()) {
        if (static_cast<int>(Q.size()) != K) fail("Q must have K entries");
        for (double w : Q) {
            if (!(w > 0.0)) fail("Q_k must be positive");
        }
    }
    if (!(alpha_child > 0.0) || !(alpha_parent > 0.0)) fail("neighbor weights must be positive");
    for (const auto* m : {&theta_a, &theta_v}) {
        if (!m->isApprox(m->transpose(), 1e-12)) fail("scaling matrices must be symmetric");
        Eigen::LLT<Eigen::Matrix3d> llt(*m);
        if (llt.info() != Eigen::Success) fail("scaling matrices must be positive definite");
    }
}

AgentState propagate(const AgentState& x, const Vec3& u, double h)
{
    AgentState n;
    n.p = x.p + h * x.v + 0.5 * h * h * u;
    n.v = x.v + h * u;
    return n;
}

double ConstraintSet::max_violation(const Trajectory& traj, const MpcParams& params) const
{
    const int K = traj.horizon();
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& c : halfspaces) {
        worst = std::max(worst, -c.plane.slack(traj.positions.at(c.step - 1)));
    }
    for (const auto& c : balls) {
        worst = std::max(worst, -c.ball.slack(traj.positions.at(c.step - 1)));
    }
    for (int k = 0; k < K; ++k) {
        worst = std::max(worst, (params.theta_a * traj.inputs[k]).norm() - params.a_max);
        worst = std::max(worst, (params.theta_v * traj.velocities[k]).norm() - params.v_max);
    }
    if (K > 0) {
        worst = std::max(worst, traj.velocities[K - 1].norm());
    }
    return worst;
}

Trajectory shift_predetermined(const Trajectory& planned)
{
    Trajectory out;
    const int K = planned.horizon();
    out.kind = TrajectoryKind::Predetermined;
    out.positions.resize(K);
    out.velocities.resize(K);
    out.inputs.assign(K, Vec3::Zero());
    for (int k = 0; k < K; ++k) {
        const int src = std::min(k + 1, K - 1);
        out.positions[k] = planned.positions[src];
        out.velocities[k] = planned.velocities[src];
        if (k + 1 < K) {
            out.inputs[k] = planned.inputs[k + 1];
        }
    }
    return out;
}

std::vector<Point3> extended_positions(const Trajectory& predetermined, const Point3& anchor)
{
    std::vector<Point3> ext = predetermined.positions;
    ext.push_back(anchor);
    return ext;
}

std::vector<HalfSpace> mbvc_constraints(const Trajectory& self, const Trajectory& other, const MpcParams& params)
{
    const double r = params.r_min();
    std::vector<HalfSpace> out;
    out.reserve(self.positions.size());
    for (std::size_t k = 0; k < self.positions.size(); ++k) {
        const Vec3 d = self.positions[k] - other.positions.at(k);
        const double n = d.norm();
        if (n <= 1e-9) {
            throw CoincidentPredetermined("predetermined points coincide at step " + std::to_string(k + 1));
        }
        HalfSpace hs;
        hs.normal = d / n;
        hs.offset = hs.normal.dot(0.5 * (self.positions[k] + other.positions[k])) + 0.5 * r;
        out.push_back(hs);
    }
    return out;
}

std::vector<StepHalfSpace> corridor_constraints(std::span<const Point3> extended,
                                                std::span<const ConvexObstacle> obstacles, const MpcParams& params)
{
    std::vector<StepHalfSpace> out;
    const int K = static_cast<int>(extended.size()) - 1;
    const double range = params.obstacle_range() + params.r_a;
    for (int k = 1; k <= K; ++k) {
        const std::array<Point3, 2> seg = {extended[k - 1], extended[k]};
        for (const auto& o : obstacles) {
            if (!near(seg, o, range)) {
                continue;
            }
            const auto sep = separating_hyperplane(seg, o, params.r_a);
            out.push_back({k, sep.plane, ConstraintSource::Corridor, o.id()});
            if (k < K) {
                out.push_back({k + 1, sep.plane, ConstraintSource::Corridor, o.id()});
            }
        }
    }
    return out;
}

IntermediateTarget update_intermediate_target(const PathGamma& path, const IntermediateTarget& current,
                                              const Point3& terminal, std::span<const ConvexObstacle> obstacles,
                                              const MpcParams& params)
{
    const auto& w = path.waypoints;
    if (w.empty() || current.index >= w.size()) {
        return current;
    }
    std::vector<Point3> hull = {current.point, terminal};
    IntermediateTarget best = current;
    for (std::size_t q = current.index; q < w.size(); ++q) {
        hull.push_back(w[q]);
        bool clear = true;
        for (const auto& o : obstacles) {
            if (bounds_distance(hull, o) > params.r_a) {
                continue;
            }
            if (!hulls_disjoint(hull, o, params.r_a - kClearTolerance)) {
                clear = false;
                break;
            }
        }
        if (!clear) {
            break;
        }
        best = {q, w[q]};
    }
    return best;
}

ConnectivityCenter connectivity_center(const Point3& pi_k, const Point3& pj_k, const Point3& pi_next,
                                       const Point3& pj_next, const MpcParams& params)
{
    const Point3 mid = 0.5 * (pi_k + pj_k);
    if ((pi_k - pj_k).norm() > params.d_w) {
        return {mid, CenterCase::Far, 1.0};
    }
    const double rw = 0.5 * params.d_w;
    const Point3 cc = 0.25 * (pi_k + pj_k + pi_next + pj_next);
    if ((pi_k - cc).norm() <= rw && (pj_k - cc).norm() <= rw && (pi_next - cc).norm() <= rw &&
        (pj_next - cc).norm() <= rw) {
        return {cc, CenterCase::Close, 0.0};
    }
    auto inside = [&](double eta) {
        const Point3 c = eta * mid + (1.0 - eta) * cc;
        return (pi_k - c).norm() <= rw && (pj_k - c).norm() <= rw;
    };
    const double eta = bisect_min(inside);
    return {eta * mid + (1.0 - eta) * cc, CenterCase::Medium, eta};
}

std::vector<StepHalfSpace> los_constraints(std::span<const Point3> ext_i, std::span<const Point3> ext_j,
                                           std::span<const ConvexObstacle> obstacles, const MpcParams& params,
                                           std::vector<double>* xi_out)
{
    std::vector<StepHalfSpace> out;
    const int K = static_cast<int>(ext_i.size()) - 1;
    const double range = params.obstacle_range() + params.d_m;
    if (xi_out) {
        xi_out->assign(K, 1.0);
    }
    std::vector<const ConvexObstacle*> nearby;
    for (int k = 1; k <= K; ++k) {
        const Point3& a = ext_i[k - 1];
        const Point3& b = ext_j[k - 1];
        const Vec3 da = ext_i[k] - a;
        const Vec3 db = ext_j[k] - b;
        const std::array<Point3, 4> widest = {a, b, ext_i[k], ext_j[k]};
        nearby.clear();
        for (const auto& o : obstacles) {
            if (near(widest, o, range)) {
                nearby.push_back(&o);
            }
        }
        if (nearby.empty()) {
            continue;
        }
        auto points = [&](double xi) { return std::array<Point3, 4>{a, b, a + xi * da, b + xi * db}; };
        auto clear = [&](double xi) {
            const auto pts = points(xi);
            for (const auto* o : nearby) {
                if (!hulls_disjoint(pts, *o, params.d_m - kClearTolerance)) {
                    return false;
                }
            }
            return true;
        };
        double xi = 1.0;
        if (!clear(1.0)) {
            try {
                xi = 1.0 - bisect_min([&](double s) { return clear(1.0 - s); });
            } catch (const Infeasible&) {
                throw NotSeparable("line of sight blocked at step " + std::to_string(k));
            }
        }
        if (xi_out) {
            (*xi_out)[k - 1] = xi;
        }
        const auto free_pts = points(xi);
        for (const auto* o : nearby) {
            const auto sep = separating_hyperplane(free_pts, *o, params.d_m);
            out.push_back({k, sep.plane, ConstraintSource::LineOfSight, o->id()});
        }
    }
    return out;
}

PairConstraints pair_constraints(std::span<const Point3> ext_i, std::span<const Point3> ext_j,
                                 std::span<const ConvexObstacle> obstacles, const MpcParams& params)
{
    PairConstraints pc;
    const int K = static_cast<int>(ext_i.size()) - 1;
    for (int k = 1; k <= K; ++k) {
        pc.centers.push_back(connectivity_center(ext_i[k - 1], ext_j[k - 1], ext_i[k], ext_j[k], params));
    }
    pc.los = los_constraints(ext_i, ext_j, obstacles, params, &pc.xi);
    return pc;
}

std::vector<double> neighbor_weights(const std::vector<bool>& is_child, const MpcParams& params)
{
    std::vector<double> w;
    double total = 0.0;
    for (bool c : is_child) {
        w.push_back(c ? params.alpha_child : params.alpha_parent);
        total += w.back();
    }
    for (auto& x : w) {
        x /= total;
    }
    return w;
}

double searcher_cost(const Trajectory& traj, const Point3& target, const MpcParams& params)
{
    const int K = traj.horizon();
    if (K == 0) {
        return 0.0;
    }
    double c = 0.5 * params.q_weight(K) * (traj.positions[K - 1] - target).squaredNorm();
    for (int k = 1; k < K; ++k) {
        c += 0.5 * params.q_weight(k) * (traj.positions[k] - traj.positions[k - 1]).squaredNorm();
    }
    return c;
}

double connector_cost(const Trajectory& traj, std::span<const Point3> tracking)
{
    double c = 0.0;
    for (int k = 0; k < traj.horizon(); ++k) {
        c += 0.5 * (traj.positions[k] - tracking[k]).squaredNorm();
    }
    return c;
}

std::vector<Point3> tracking_points(std::span<const Trajectory* const> neighbors, std::span<const double> alpha)
{
    if (neighbors.empty()) {
        return {};
    }
    const int K = neighbors.front()->horizon();
    std::vector<Point3> out(K, Point3::Zero());
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
        for (int k = 0; k < K; ++k) {
            out[k] += alpha[j] * neighbors[j]->positions[k];
        }
    }
    return out;
}

ConicQp build_problem(const AgentState& state, const Objective& objective, const ConstraintSet& constraints,
                      const MpcParams& params)
{
    const int K = params.K;
    const int n = 3 * K;
    const double h = params.h;

    std::vector<MatrixXd> Sp(K + 1);
    std::vector<Vec3> cp(K + 1);
    for (int k = 1; k <= K; ++k) {
        Sp[k] = position_map(k, K, h);
        cp[k] = state.p + k * h * state.v;
    }

    ConicQp qp;
    qp.P = MatrixXd::Zero(n, n);
    qp.q = VectorXd::Zero(n);
    if (objective.role == Role::Searcher) {
        add_square(qp.P, qp.q, Sp[K], cp[K] - objective.target, params.q_weight(K));
        for (int k = 1; k < K; ++k) {
            add_square(qp.P, qp.q, Sp[k + 1] - Sp[k], cp[k + 1] - cp[k], params.q_weight(k));
        }
    } else if (!objective.tracking.empty()) {
        for (int k = 1; k <= K; ++k) {
            add_square(qp.P, qp.q, Sp[k], cp[k] - objective.tracking[k - 1], 1.0);
        }
    }

    qp.A = velocity_map(K, K, h);
    qp.b = -state.v;

    const int lin = static_cast<int>(constraints.halfspaces.size());
    const int nballs = static_cast<int>(constraints.balls.size());
    const int m = lin + 4 * (2 * K + nballs);
    qp.G = MatrixXd::Zero(m, n);
    qp.h = VectorXd::Zero(m);
    qp.nonneg = lin;

    int row = 0;
    for (const auto& c : constraints.halfspaces) {
        const Vec3& a = c.plane.normal;
        const int k = c.step;
        // a.p >= b  ->  -a'S u <= a'c - b
        const double sign = c.plane.sense == Sense::GreaterEqual ? 1.0 : -1.0;
        qp.G.row(row) = -sign * a.transpose() * Sp[k];
        qp.h(row) = sign * (a.dot(cp[k]) - c.plane.offset);
        ++row;
    }
    for (int k = 0; k < K; ++k) {
        qp.h(row) = params.a_max;
        qp.G.block(row + 1, 3 * k, 3, 3) = -params.theta_a;
        row += 4;
        qp.soc.push_back(4);
    }
    for (int k = 1; k <= K; ++k) {
        qp.h(row) = params.v_max;
        qp.G.block(row + 1, 0, 3, n) = -params.theta_v * velocity_map(k, K, h);
        qp.h.segment<3>(row + 1) = params.theta_v * state.v;
        row += 4;
        qp.soc.push_back(4);
    }
    for (const auto& c : constraints.balls) {
        qp.h(row) = c.ball.radius;
        qp.G.block(row + 1, 0, 3, n) = -Sp[c.step];
        qp.h.segment<3>(row + 1) = cp[c.step] - c.ball.center;
        row += 4;
        qp.soc.push_back(4);
    }
    return qp;
}

void check_warm_start(const Trajectory& predetermined, const ConstraintSet& constraints, const MpcParams& params)
{
    const double v = constraints.max_violation(predetermined, params);
    if (v > kWarmStartTolerance) {
        throw InvalidWarmStart("predetermined trajectory violates its constraints by " + std::to_string(v));
    }
}

StepResult solve_step(const AgentState& state, const Trajectory& predetermined, const Objective& objective,
                      const ConstraintSet& constraints, const MpcParams& params)
{
    check_warm_start(predetermined, constraints, params);

    const auto t0 = std::chrono::steady_clock::now();
    StepResult res;
    const ConicQp qp = build_problem(state, objective, constraints, params);
    const ConicQpResult sol = solve_conic_qp(qp, params.solver);
    res.status = sol.status;
    res.iterations = sol.iterations;

    bool ok = (sol.status == ConicQpStatus::Optimal || sol.status == ConicQpStatus::Inaccurate) &&
              sol.x.allFinite();
    if (ok) {
        std::vector<Vec3> u(params.K);
        for (int k = 0; k < params.K; ++k) {
            u[k] = sol.x.segment<3>(3 * k);
        }
        res.planned = Trajectory::rollout(state, u, params.h);
        ok = constraints.max_violation(res.planned, params) <= kOutputTolerance;
    }
    if (!ok) {
        res.planned = recover_inputs(state, predetermined, params.h);
        res.fallback = true;
    }
    res.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace relaynet
