#include <cmath>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <ckoop/controller.hpp>
#include <ckoop/errors.hpp>
#include <ckoop/koopman_id.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace ckoop;
using test::random_matrix;
using test::random_vector;

namespace {

ControllerSpec scalar_spec(double k, double gamma, double rho, double c_v) {
    ControllerSpec s;
    s.gain = Mat::Constant(1, 1, k);
    s.metric = Mat::Identity(1, 1);
    s.theta = Mat::Identity(1, 1);
    s.gamma = gamma;
    s.rho = rho;
    s.c_v = c_v;
    return s;
}

}  // namespace

TEST(Lqr, ScalarRiccatiMatchesGoldenRatio) {
    const Mat one = Mat::Ones(1, 1);
    const Mat k = lqr_gain(one, one, one, one);
    const double p = 0.5 * (1.0 + std::sqrt(5.0));
    EXPECT_NEAR(k(0, 0), p / (1.0 + p), 1e-10);
}

TEST(Lyapunov, SolvesScaledEquation) {
    Rng rng(1);
    const Mat a = random_matrix(rng, 4, 4, 0.2);
    const Mat q = Mat::Identity(4, 4);
    const Mat m = solve_scaled_lyapunov(a, 0.9, q);
    EXPECT_LT((a.transpose() * m * a - 0.9 * m + q).norm(), 1e-12);
}

TEST(Synthesis, ZeroDynamicsGivesScaledIdentityMetric) {
    const Mat a = Mat::Zero(3, 3);
    const Mat b = Mat::Identity(3, 3);
    const SynthesisResult r = synthesize_metric(a, b, 0.9, Mat::Identity(3, 3));
    EXPECT_LT((r.spec.metric - Mat::Identity(3, 3) / 0.9).norm(), 1e-12);
    EXPECT_NEAR(std::sqrt(r.spec.m_bar / r.spec.m_under), 1.0, 1e-12);
}

TEST(Synthesis, ScalarCertificate) {
    const Mat one = Mat::Ones(1, 1);
    const SynthesisResult r = synthesize_metric(one, one, 0.81, one);
    const double k = r.spec.gain(0, 0);
    EXPECT_LT(std::abs(1.0 - k), 0.9);
    EXPECT_LE(r.spec.certificate, 1e-8);
    EXPECT_LE(verify_lmi(one - one * r.spec.gain, r.spec.metric, 0.81), 1e-8);
}

TEST(Synthesis, RandomControllablePairs) {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
        const int n = 2 + static_cast<int>(rng.index(7));
        const int m = 1 + static_cast<int>(rng.index(2));
        const Mat a = random_matrix(rng, n, n, 0.6);
        const Mat b = random_matrix(rng, n, m);
        const SynthesisResult r = synthesize_metric(a, b, 0.9, Mat::Identity(n, n));
        const Mat acl = a - b * r.spec.gain;
        EXPECT_LE(verify_lmi(acl, r.spec.metric, 0.9), 1e-8);
        EXPECT_LT(r.closed_loop_moduli.front(), 1.0);
        EXPECT_LT((r.spec.theta.transpose() * r.spec.theta - r.spec.metric).norm(), 1e-9 * r.spec.metric.norm());
        EXPECT_TRUE(r.spec.theta.isUpperTriangular());
        EXPECT_GT(r.spec.m_under, 0.0);
    }
}

TEST(Synthesis, UncontrollablePairRejected) {
    Mat a = Mat::Identity(2, 2);
    Mat b(2, 1);
    b << 1.0, 0.0;
    SynthesisOptions opt;
    opt.controllability_floor = 1e-6;
    EXPECT_THROW((void)synthesize_metric(a, b, 0.9, Mat::Identity(2, 2), opt), SynthesisError);
}

TEST(Synthesis, InvalidGammaRejected) {
    const Mat one = Mat::Ones(1, 1);
    EXPECT_THROW((void)synthesize_metric(one, one, 1.5, one), InputError);
}

TEST(VerifyLmi, Examples) {
    EXPECT_NEAR(verify_lmi(Mat::Zero(3, 3), Mat::Identity(3, 3), 0.9), -0.9, 1e-15);
    EXPECT_NEAR(verify_lmi(std::sqrt(0.9) * Mat::Identity(3, 3), Mat::Identity(3, 3), 0.9), 0.0, 1e-15);
}

TEST(Nfc, Examples) {
    ControllerSpec s = scalar_spec(2.0, 0.9, 0.0, 1.0);
    EXPECT_DOUBLE_EQ(nfc_input(s, Vec::Ones(1), Vec::Constant(1, 0.5))(0), 0.0);
    EXPECT_DOUBLE_EQ(nfc_input(s, Vec::Ones(1), Vec::Zero(1))(0), 1.0);
    s.gain.setZero();
    EXPECT_DOUBLE_EQ(nfc_input(s, Vec::Ones(1), Vec::Constant(1, 7.0))(0), 1.0);
}

TEST(Crdr, FeasibleAtZero) {
    // gamma |theta e| - rho >= |theta A e|
    const ControllerSpec s = scalar_spec(0.0, 0.9, 0.1, 1.0);
    const Mat a = Mat::Constant(1, 1, 0.5);
    const CrdrSolution sol = crdr_step(s, a, Mat::Ones(1, 1), Vec::Ones(1), Vec::Constant(1, 0.3));
    EXPECT_EQ(sol.delta_u.norm(), 0.0);
    EXPECT_EQ(sol.delta_v, 0.0);
    EXPECT_EQ(sol.objective, 0.0);
    EXPECT_DOUBLE_EQ(sol.u(0), 0.3);
}

TEST(Crdr, ZeroInputMatrix) {
    const ControllerSpec s = scalar_spec(0.0, 0.5, 0.1, 1.0);
    const Mat a = Mat::Constant(1, 1, 2.0);
    const CrdrSolution sol = crdr_step(s, a, Mat::Zero(1, 1), Vec::Ones(1), Vec::Zero(1));
    EXPECT_EQ(sol.delta_u.norm(), 0.0);
    EXPECT_NEAR(sol.delta_v, std::max(0.0, 2.0 - (0.5 - 0.1)), 1e-12);
}

TEST(Crdr, ScalarClosedForm) {
    const ControllerSpec s = scalar_spec(0.0, 0.5, 0.0, 1.0);
    const Mat one = Mat::Ones(1, 1);
    const CrdrSolution sol = crdr_step(s, one, one, Vec::Ones(1), Vec::Zero(1));
    EXPECT_NEAR(sol.delta_u(0), -0.25, 1e-9);
    EXPECT_NEAR(sol.delta_v, 0.25, 1e-9);
    EXPECT_NEAR(sol.objective, 0.125, 1e-12);

    const auto grid = test::crdr_grid_search(crdr_reduce(s, one, one, Vec::Ones(1)), 1e-6);
    EXPECT_NEAR(grid.du(0), -0.25, 1e-6);
    EXPECT_NEAR(grid.objective, 0.125, 1e-10);
}

TEST(Crdr, ZeroFeedbackMatrixOptimumAtZero) {
    CrdrSubproblem p;
    p.a = Vec::Constant(2, 1.0);
    p.f = Mat::Zero(2, 1);
    p.r0 = 0.2;
    p.c_v = 3.0;
    const CrdrSolution sol = solve_crdr(p);
    EXPECT_EQ(sol.delta_u.norm(), 0.0);
    EXPECT_NEAR(sol.delta_v, std::sqrt(2.0) - 0.2, 1e-12);
}

TEST(Crdr, BeatsRandomProbes) {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
        CrdrSubproblem p;
        const int n = 4;
        const int m = 1 + static_cast<int>(rng.index(3));
        p.a = random_vector(rng, n);
        p.f = random_matrix(rng, n, m);
        p.r0 = rng.uniform(-0.5, 1.0);
        p.c_v = std::exp(rng.uniform(-4, 4));
        const CrdrSolution sol = solve_crdr(p);
        const double best = p.objective(sol.delta_u);
        EXPECT_NEAR(sol.objective, best, 1e-9 * std::max(1.0, best));
        for (int i = 0; i < 10000; ++i) {
            Vec du = random_vector(rng, m);
            du *= rng.uniform(0, 10) / std::max(1e-12, du.norm());
            EXPECT_LE(best, p.objective(du) + 1e-12);
        }
    }
}

TEST(Crdr, SlackIsTight) {
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        CrdrSubproblem p;
        p.a = random_vector(rng, 3);
        p.f = random_matrix(rng, 3, 2);
        p.r0 = rng.uniform(-1, 1);
        p.c_v = std::exp(rng.uniform(-3, 3));
        const CrdrSolution sol = solve_crdr(p);
        const double excess = (p.a + p.f * sol.delta_u).norm() - p.r0;
        EXPECT_NEAR(sol.delta_v, std::max(0.0, excess), 1e-7);
        EXPECT_GE(sol.delta_v, 0.0);
        EXPECT_LE(sol.constraint_gap, 1e-7);
    }
}

TEST(Crdr, ReduceBuildsSubproblem) {
    Rng rng(5);
    ControllerSpec s;
    const Mat th = random_matrix(rng, 3, 3).triangularView<Eigen::Upper>();
    s.theta = th;
    s.metric = th.transpose() * th;
    s.gain = Mat::Zero(1, 3);
    s.gamma = 0.8;
    s.rho = 0.05;
    s.c_v = 2.0;
    const Mat a = random_matrix(rng, 3, 3);
    const Mat b = random_matrix(rng, 3, 1);
    const Vec e = random_vector(rng, 3);
    const CrdrSubproblem p = crdr_reduce(s, a, b, e);
    EXPECT_LT((p.a - th * a * e).norm(), 1e-14);
    EXPECT_LT((p.f - th * b).norm(), 1e-14);
    EXPECT_NEAR(p.r0, 0.8 * (th * e).norm() - 0.05, 1e-14);
    EXPECT_EQ(p.c_v, 2.0);
}

TEST(Presets, ShippedValues) {
    const auto d = dubins_preset();
    EXPECT_EQ(d.params.gamma, 0.9);
    EXPECT_EQ(d.params.rho, 0.073);
    EXPECT_EQ(d.params.c_v, 0.01);
    const auto f = flapper_preset();
    EXPECT_EQ(f.params.gamma, 0.9);
    EXPECT_EQ(f.params.rho, 1.0);
    EXPECT_EQ(f.params.c_v, 100.0);
}
