#pragma once

#include "relaynet/conic_qp.hpp"
#include "relaynet/geometry.hpp"
#include "relaynet/netdesign.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace relaynet {

class InvalidWarmStart : public Error {
public:
    using Error::Error;
};

class CoincidentPredetermined : public Error {
public:
    using Error::Error;
};

struct AgentState {
    Point3 p = Point3::Zero();
    Vec3 v = Vec3::Zero();
};

enum class TrajectoryKind { Planned, Predetermined };

/// K-step trajectory: positions/velocities are steps 1..K, inputs are u_0..u_{K-1}.
struct Trajectory {
    std::vector<Point3> positions;
    std::vector<Vec3> velocities;
    std::vector<Vec3> inputs;
    TrajectoryKind kind = TrajectoryKind::Planned;

    int horizon() const { return static_cast<int>(positions.size()); }

    /// K copies of the state (the t0 predetermined trajectory)
    static Trajectory hold(const AgentState& s, int K);
    /// Integrates the double integrator from `start` under `inputs`.
    static Trajectory rollout(const AgentState& start, const std::vector<Vec3>& inputs, double h);
};

struct MpcParams {
    double h = 0.5;
    int K = 10;
    Eigen::Matrix3d theta_a = Eigen::Matrix3d::Identity();
    Eigen::Matrix3d theta_v = Eigen::Matrix3d::Identity();
    double a_max = 3.0;
    double v_max = 15.0;
    double r_a = 2.0;
    double d_c = 150.0;
    double d_w = 142.0;
    double d_m = 3.0;
    /// Q_1..Q_K; empty means Q_k = 1 for k < K and Q_K = 10
    std::vector<double> Q;
    double alpha_child = 3.0;
    double alpha_parent = 1.0;
    ConicQpOptions solver;

    double q_weight(int k) const;
    /// sqrt(4 r_a^2 + h^2 v_max^2)
    double r_min() const;
    /// bound on |v| implied by |theta_v v| <= v_max
    double speed_bound() const;
    /// obstacles farther than this from the relevant predetermined points are skipped
    double obstacle_range() const;
    /// Throws Error on inconsistent parameters.
    void validate() const;
};

/// Exact discrete double-integrator step.
AgentState propagate(const AgentState& x, const Vec3& u, double h);

enum class ConstraintSource { Mbvc, Corridor, LineOfSight };

struct StepHalfSpace {
    int step = 1;  // 1..K
    HalfSpace plane;
    ConstraintSource source = ConstraintSource::Mbvc;
    int other = -1;  // neighbor agent or obstacle id
};

struct StepBall {
    int step = 1;
    Ball ball;
    int neighbor = -1;
};

/// Everything agent i's problem is built from, beyond dynamics, motion limits and v_K = 0.
struct ConstraintSet {
    std::vector<StepHalfSpace> halfspaces;
    std::vector<StepBall> balls;

    /// Largest violation of any constraint (half-spaces, balls, motion limits,
    /// terminal velocity) by `traj`; <= 0 when satisfied.
    double max_violation(const Trajectory& traj, const MpcParams& params) const;
};

/// p_k <- p_{k+1}, last point repeated.
Trajectory shift_predetermined(const Trajectory& planned);

/// Predetermined positions with the (K+1)-th anchor appended.
std::vector<Point3> extended_positions(const Trajectory& predetermined, const Point3& anchor);

std::vector<HalfSpace> mbvc_constraints(const Trajectory& self, const Trajectory& other, const MpcParams& params);

/// One plane per (step, nearby obstacle) separating [p_k, p_{k+1}] from the
/// obstacle inflated by r_a; each plane is emitted for both step k and k+1.
std::vector<StepHalfSpace> corridor_constraints(std::span<const Point3> extended, std::span<const ConvexObstacle> obstacles,
                                                const MpcParams& params);

struct IntermediateTarget {
    std::size_t index = 0;  // waypoint index on the path
    Point3 point = Point3::Zero();
};

/// Advances the searcher's tractive point to the farthest waypoint whose hull
/// with the previous point and p_K clears the obstacles inflated by r_a.
IntermediateTarget update_intermediate_target(const PathGamma& path, const IntermediateTarget& current,
                                              const Point3& terminal, std::span<const ConvexObstacle> obstacles,
                                              const MpcParams& params);

enum class CenterCase { Far = 1, Close = 2, Medium = 3 };

struct ConnectivityCenter {
    Point3 center = Point3::Zero();
    CenterCase which = CenterCase::Far;
    double eta = 1.0;
};

ConnectivityCenter connectivity_center(const Point3& pi_k, const Point3& pj_k, const Point3& pi_next,
                                       const Point3& pj_next, const MpcParams& params);

/// Shared per-edge data: one ball centre per step and the LOS planes.
struct PairConstraints {
    std::vector<ConnectivityCenter> centers;  // steps 1..K
    std::vector<StepHalfSpace> los;
    std::vector<double> xi;                   // look-ahead fraction per step
};

std::vector<StepHalfSpace> los_constraints(std::span<const Point3> ext_i, std::span<const Point3> ext_j,
                                           std::span<const ConvexObstacle> obstacles, const MpcParams& params,
                                           std::vector<double>* xi_out = nullptr);

PairConstraints pair_constraints(std::span<const Point3> ext_i, std::span<const Point3> ext_j,
                                 std::span<const ConvexObstacle> obstacles, const MpcParams& params);

/// Raw child/parent weights normalised over the neighbor list.
std::vector<double> neighbor_weights(const std::vector<bool>& is_child, const MpcParams& params);

double searcher_cost(const Trajectory& traj, const Point3& target, const MpcParams& params);
double connector_cost(const Trajectory& traj, std::span<const Point3> tracking);
/// p~_k = sum_j alpha_j pbar^j_k
std::vector<Point3> tracking_points(std::span<const Trajectory* const> neighbors, std::span<const double> alpha);

struct Objective {
    Role role = Role::Connector;
    Point3 target = Point3::Zero();   // searcher
    std::vector<Point3> tracking;     // connector, steps 1..K
};

struct StepResult {
    Trajectory planned;
    bool fallback = false;
    ConicQpStatus status = ConicQpStatus::NumericalError;
    int iterations = 0;
    double solve_ms = 0.0;
};

/// Assembles the cone program over u_0..u_{K-1} (positions and velocities are
/// affine in the inputs).
ConicQp build_problem(const AgentState& state, const Objective& objective, const ConstraintSet& constraints,
                      const MpcParams& params);

/// Throws InvalidWarmStart when the predetermined trajectory violates the set by more than 1e-5.
void check_warm_start(const Trajectory& predetermined, const ConstraintSet& constraints, const MpcParams& params);

/// Solves the per-agent program; on solver failure returns the predetermined
/// trajectory with inputs recovered from its velocities.
StepResult solve_step(const AgentState& state, const Trajectory& predetermined, const Objective& objective,
                      const ConstraintSet& constraints, const MpcParams& params);

inline constexpr double kWarmStartTolerance = 1e-5;
inline constexpr double kOutputTolerance = 1e-6;

}  // namespace relaynet
