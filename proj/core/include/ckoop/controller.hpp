#pragma once

#include <string>
#include <vector>

#include "ckoop/numeric.hpp"

namespace ckoop {

// Feedback gain and contraction metric for the latent linear system.
//
// Invariants after synthesis:
//   theta^T theta == metric, metric eigenvalues in [m_under, m_bar], m_under > 0
//   max eig((A - BK)^T M (A - BK) - gamma M) == certificate <= 1e-8
struct ControllerSpec {
    Mat gain;    // K, m x N
    Mat metric;  // M, N x N
    Mat theta;   // upper-triangular, theta^T theta = M
    double gamma = 0.9;
    double rho = 0.0;
    double c_v = 1.0;
    double m_bar = 1.0;
    double m_under = 1.0;
    double certificate = 0.0;

    [[nodiscard]] int latent_dim() const noexcept { return static_cast<int>(metric.rows()); }
    [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(gain.rows()); }
    void validate() const;
};

struct CrdrParameters {
    double gamma = 0.9;
    double rho = 0.0;
    double c_v = 1.0;
};

// Shipped parameter sets.
struct ControllerPreset {
    std::string name;
    CrdrParameters params;
};
[[nodiscard]] ControllerPreset dubins_preset();
[[nodiscard]] ControllerPreset flapper_preset();

struct SynthesisOptions {
    double controllability_floor = 1e-9;
    // Riccati state/input weights; the state weight is scaled by 10 on each
    // rejected attempt.
    double lqr_state_weight = 1.0;
    double lqr_input_weight = 1.0;
    int lqr_scale_attempts = 6;
    int riccati_max_iters = 100000;
    double riccati_tol = 1e-13;
};

struct SynthesisResult {
    ControllerSpec spec;
    double lqr_state_weight = 1.0;      // weight that was accepted
    std::vector<double> closed_loop_moduli;  // |eig(A - BK)|, descending
};

// LQR gain by Riccati iteration, accepted once rho(A - BK) < sqrt(gamma); then
// M from A_cl^T M A_cl - gamma M = -Q and theta = chol(M)^T.
[[nodiscard]] SynthesisResult synthesize_metric(const Mat& a, const Mat& b, double gamma, const Mat& q_weight,
                                                const SynthesisOptions& options = {});

// Discrete-time Riccati iteration; returns the LQR gain.
[[nodiscard]] Mat lqr_gain(const Mat& a, const Mat& b, const Mat& q, const Mat& r, int max_iters = 100000,
                           double tol = 1e-13);

// Solves A^T M A - gamma M = -Q for M via the Kronecker form.
[[nodiscard]] Mat solve_scaled_lyapunov(const Mat& a, double gamma, const Mat& q);

// Largest eigenvalue of A_cl^T M A_cl - gamma M.
[[nodiscard]] double verify_lmi(const Mat& a_cl, const Mat& metric, double gamma);

[[nodiscard]] Vec nfc_input(const ControllerSpec& spec, const Vec& u_d, const Vec& e);

// min |du|^2 + c_v dv^2  s.t. |a + F du| <= r0 + dv, dv >= 0
// with a = theta A e, F = theta B, r0 = gamma |theta e| - rho.
struct CrdrSubproblem {
    Vec a;
    Mat f;
    double r0 = 0.0;
    double c_v = 1.0;

    // Slack-eliminated objective g(du) = |du|^2 + c_v max(0, |a + F du| - r0)^2.
    [[nodiscard]] double objective(const Vec& du) const;
    [[nodiscard]] double optimal_slack(const Vec& du) const;
};

struct CrdrSolution {
    Vec u;
    Vec delta_u;
    double delta_v = 0.0;
    double objective = 0.0;
    // |a + F du| - (r0 + dv); <= 0 when the constraint holds.
    double constraint_gap = 0.0;
    int iterations = 0;
};

struct CrdrOptions {
    double tol = 1e-9;
    int max_iters = 200;
};

[[nodiscard]] CrdrSubproblem crdr_reduce(const ControllerSpec& spec, const Mat& a, const Mat& b, const Vec& e);
[[nodiscard]] CrdrSolution solve_crdr(const CrdrSubproblem& problem, const CrdrOptions& options = {});
[[nodiscard]] CrdrSolution crdr_step(const ControllerSpec& spec, const Mat& a, const Mat& b, const Vec& e,
                                     const Vec& u_d, const CrdrOptions& options = {});

}  // namespace ckoop
