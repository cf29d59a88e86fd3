#include "relaynet/conic_qp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace relaynet;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd random_soc_interior(std::mt19937_64& rng, int k)
{
    std::normal_distribution<double> g(0.0, 1.0);
    VectorXd v(k);
    for (int i = 1; i < k; ++i) {
        v(i) = g(rng);
    }
    v(0) = v.tail(k - 1).norm() + 0.1 + std::abs(g(rng));
    return v;
}

}  // namespace

TEST(NtScaling, MapsZAndSToSamePoint)
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    const int nonneg = 3;
    const std::vector<int> soc = {4, 3};
    for (int trial = 0; trial < 50; ++trial) {
        VectorXd s(10);
        VectorXd z(10);
        for (int i = 0; i < nonneg; ++i) {
            s(i) = u(rng);
            z(i) = u(rng);
        }
        s.segment(3, 4) = random_soc_interior(rng, 4);
        z.segment(3, 4) = random_soc_interior(rng, 4);
        s.segment(7, 3) = random_soc_interior(rng, 3);
        z.segment(7, 3) = random_soc_interior(rng, 3);
        const auto w = cone::nt_scaling(s, z, nonneg, soc);
        const VectorXd lhs = w.apply(z, nonneg, soc);
        const VectorXd rhs = w.apply_inverse(s, nonneg, soc);
        EXPECT_LT((lhs - rhs).norm(), 1e-10 * (1.0 + lhs.norm()));
        const VectorXd x = VectorXd::Random(10);
        EXPECT_LT((w.apply_inverse(w.apply(x, nonneg, soc), nonneg, soc) - x).norm(), 1e-10);
    }
}

TEST(MaxStep, SecondOrderConeBoundary)
{
    // x = (2, 0, 0), d = (0, 1, 0): boundary when |alpha| = 2
    VectorXd x(3);
    x << 2, 0, 0;
    VectorXd d(3);
    d << 0, 1, 0;
    EXPECT_NEAR(cone::max_step(x, d, 0, {3}), 2.0, 1e-12);
    d << -1, 0, 0;
    EXPECT_NEAR(cone::max_step(x, d, 0, {3}), 2.0, 1e-12);
    d << 1, 0.5, 0;
    EXPECT_TRUE(std::isinf(cone::max_step(x, d, 0, {3})));
    VectorXd xl(2);
    xl << 1, 4;
    VectorXd dl(2);
    dl << -0.5, 1;
    EXPECT_NEAR(cone::max_step(xl, dl, 2, {}), 2.0, 1e-12);
}

TEST(ConicQp, ProjectionOntoBall)
{
    // min 1/2|x - a|^2  s.t. |x| <= 1
    ConicQp qp;
    qp.P = MatrixXd::Identity(3, 3);
    const VectorXd a = (VectorXd(3) << 3, -4, 0).finished();
    qp.q = -a;
    qp.A = MatrixXd::Zero(0, 3);
    qp.b = VectorXd::Zero(0);
    qp.G = MatrixXd::Zero(4, 3);
    qp.G.bottomRows(3) = -MatrixXd::Identity(3, 3);
    qp.h = VectorXd::Zero(4);
    qp.h(0) = 1.0;
    qp.soc = {4};
    const auto r = solve_conic_qp(qp);
    ASSERT_EQ(r.status, ConicQpStatus::Optimal);
    EXPECT_LT((r.x - a / 5.0).norm(), 1e-6);
}

TEST(ConicQp, BoxConstrainedWithEquality)
{
    // min 1/2|x|^2 - x1 - x2  s.t. x1 + x2 + x3 = 1, x <= 0.4
    ConicQp qp;
    qp.P = MatrixXd::Identity(3, 3);
    qp.q = (VectorXd(3) << -1, -1, 0).finished();
    qp.A = (MatrixXd(1, 3) << 1, 1, 1).finished();
    qp.b = (VectorXd(1) << 1).finished();
    qp.G = MatrixXd::Identity(3, 3);
    qp.h = VectorXd::Constant(3, 0.4);
    qp.nonneg = 3;
    const auto r = solve_conic_qp(qp);
    ASSERT_EQ(r.status, ConicQpStatus::Optimal);
    // x1 = x2 = 0.4 active, x3 = 0.2
    EXPECT_NEAR(r.x(0), 0.4, 1e-6);
    EXPECT_NEAR(r.x(1), 0.4, 1e-6);
    EXPECT_NEAR(r.x(2), 0.2, 1e-6);
}

TEST(ConicQp, RandomProblemsSatisfyKkt)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 6;
        MatrixXd L = MatrixXd::Random(n, n);
        ConicQp qp;
        qp.P = L * L.transpose() + 0.1 * MatrixXd::Identity(n, n);
        qp.q = VectorXd::Random(n) * 5;
        qp.A = MatrixXd::Random(1, n);
        const VectorXd x0 = VectorXd::Random(n) * 0.1;  // strictly feasible point
        qp.b = qp.A * x0;
        qp.nonneg = 5;
        qp.soc = {4, 3};
        const int m = qp.nonneg + 7;
        qp.G = MatrixXd::Random(m, n);
        VectorXd slack(m);
        for (int i = 0; i < qp.nonneg; ++i) {
            slack(i) = 0.5 + std::abs(g(rng));
        }
        slack.segment(5, 4) = random_soc_interior(rng, 4);
        slack.segment(9, 3) = random_soc_interior(rng, 3);
        qp.h = qp.G * x0 + slack;

        const auto r = solve_conic_qp(qp);
        ASSERT_EQ(r.status, ConicQpStatus::Optimal) << trial;
        // stationarity, primal feasibility, complementarity checked from scratch
        const VectorXd rx = qp.P * r.x + qp.q + qp.A.transpose() * r.y + qp.G.transpose() * r.z;
        EXPECT_LT(rx.norm(), 1e-5);
        EXPECT_LT((qp.A * r.x - qp.b).norm(), 1e-8);
        const VectorXd gx = qp.h - qp.G * r.x;
        for (int i = 0; i < qp.nonneg; ++i) {
            EXPECT_GE(gx(i), -1e-8);
            EXPECT_GE(r.z(i), -1e-12);
        }
        EXPECT_GE(gx(5) - gx.segment(6, 3).norm(), -1e-8);
        EXPECT_GE(gx(9) - gx.segment(10, 2).norm(), -1e-8);
        EXPECT_LT(std::abs(r.s.dot(r.z)), 1e-5);
    }
}
