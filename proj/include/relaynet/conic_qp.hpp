#pragma once

#include <Eigen/Dense>

#include <vector>

namespace relaynet {

/// minimize    1/2 x'Px + q'x
/// subject to  Ax = b
///             Gx + s = h,  s in R+^nonneg x Q^soc[0] x Q^soc[1] x ...
///
/// Rows of G are ordered: the nonneg linear rows first, then each second-order
/// cone block (t, w) meaning |w| <= t.
struct ConicQp {
    Eigen::MatrixXd P;
    Eigen::VectorXd q;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    int nonneg = 0;
    std::vector<int> soc;
};

struct ConicQpOptions {
    double tolerance = 1e-7;
    /// absolute bound on the primal residual |Gx + s - h|, |Ax - b|
    double feasibility_tolerance = 1e-9;
    int max_iterations = 200;
    /// gap and dual residual accepted from a stalled run (reported as Inaccurate)
    double reduced_tolerance = 1e-5;
};

/// Inaccurate: the method stalled but its best iterate is primal feasible and
/// meets `reduced_tolerance`.
enum class ConicQpStatus { Optimal, Inaccurate, MaxIterations, NumericalError };

struct ConicQpResult {
    ConicQpStatus status = ConicQpStatus::NumericalError;
    Eigen::VectorXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd s;
    Eigen::VectorXd z;
    int iterations = 0;
    double objective = 0.0;
};

/// Primal-dual interior-point method with Nesterov-Todd scaling and a
/// Mehrotra predictor-corrector step. Dense; intended for problems with tens of
/// variables and a few hundred cone rows.
ConicQpResult solve_conic_qp(const ConicQp& problem, const ConicQpOptions& options = {});

namespace cone {

/// Nesterov-Todd scaling W (symmetric) at a strictly feasible pair (s, z), with W z = W^-1 s.
struct NtScaling {
    Eigen::VectorXd d;                 // nonneg block: W = diag(d)
    std::vector<double> beta;          // per second-order cone
    std::vector<Eigen::VectorXd> v;    // per second-order cone, v'Jv = 1

    Eigen::VectorXd apply(const Eigen::VectorXd& x, int nonneg, const std::vector<int>& soc) const;
    Eigen::VectorXd apply_inverse(const Eigen::VectorXd& x, int nonneg, const std::vector<int>& soc) const;
};

NtScaling nt_scaling(const Eigen::VectorXd& s, const Eigen::VectorXd& z, int nonneg, const std::vector<int>& soc);

/// Largest alpha >= 0 with x + alpha * d in the cone (infinity when unbounded).
double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d, int nonneg, const std::vector<int>& soc);

}  // namespace cone

}  // namespace relaynet
