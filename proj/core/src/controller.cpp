#include "ckoop/controller.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ckoop/errors.hpp"
#include "ckoop/koopman_id.hpp"

namespace ckoop {

void ControllerSpec::validate() const {
    const auto n = metric.rows();
    if (metric.cols() != n || theta.rows() != n || theta.cols() != n || gain.cols() != n) {
        throw InputError("controller: K, M, theta dimensions disagree");
    }
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("controller: gamma must lie in (0,1)");
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw InputError("controller: rho must be >= 0");
    if (!(c_v > 0.0) || !std::isfinite(c_v)) throw InputError("controller: c_v must be > 0");
    if (!(m_under > 0.0) || m_bar < m_under) throw InputError("controller: metric bounds invalid");
    if (!gain.allFinite() || !metric.allFinite() || !theta.allFinite()) {
        throw InputError("controller: matrices must be finite");
    }
}

ControllerPreset dubins_preset() { return {"dubins", {0.9, 0.073, 0.01}}; }
ControllerPreset flapper_preset() { return {"flapper", {0.9, 1.0, 100.0}}; }

// ---------------------------------------------------------------------------
// Synthesis

Mat lqr_gain(const Mat& a, const Mat& b, const Mat& q, const Mat& r, int max_iters, double tol) {
    Mat p = q;
    for (int it = 0; it < max_iters; ++it) {
        const Mat bt_p = b.transpose() * p;
        const Mat s = r + bt_p * b;
        const Mat k = s.ldlt().solve(bt_p * a);
        Mat next = q + a.transpose() * p * a - (a.transpose() * p * b) * k;
        next = 0.5 * (next + next.transpose());
        if (!next.allFinite()) throw NumericalError("lqr_gain: Riccati iteration diverged");
        const double change = (next - p).norm();
        p = std::move(next);
        if (change <= tol * std::max(1.0, p.norm())) break;
    }
    const Mat bt_p = b.transpose() * p;
    return (r + bt_p * b).ldlt().solve(bt_p * a);
}

Mat solve_scaled_lyapunov(const Mat& a, double gamma, const Mat& q) {
    const auto n = a.rows();
    if (a.cols() != n || q.rows() != n || q.cols() != n) throw InputError("solve_scaled_lyapunov: shape mismatch");
    // vec(A^T M A) = (A^T kron A^T) vec(M), column-major vec.
    const auto nn = n * n;
    Mat sys(nn, nn);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            sys.block(i * n, j * n, n, n) = a(j, i) * a.transpose();
        }
    }
    sys.diagonal().array() -= gamma;
    Vec rhs(nn);
    for (Eigen::Index j = 0; j < n; ++j) rhs.segment(j * n, n) = -q.col(j);
    Eigen::FullPivLU<Mat> lu(sys);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
        throw NumericalError("solve_scaled_lyapunov: system is ill-conditioned (rcond " + format_double(lu.rcond()) +
                             ")");
    }
    const Vec vec_m = lu.solve(rhs);
    Mat m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) m.col(j) = vec_m.segment(j * n, n);
    return 0.5 * (m + m.transpose());
}

double verify_lmi(const Mat& a_cl, const Mat& metric, double gamma) {
    if (a_cl.rows() != a_cl.cols() || metric.rows() != a_cl.rows() || metric.cols() != a_cl.cols()) {
        throw InputError("verify_lmi: shape mismatch");
    }
    return max_symmetric_eigenvalue(a_cl.transpose() * metric * a_cl - gamma * metric);
}

namespace {

std::vector<double> eigen_moduli(const Mat& a) {
    Eigen::EigenSolver<Mat> eig(a, false);
    std::vector<double> out;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) out.push_back(std::abs(eig.eigenvalues()(i)));
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

}  // namespace

SynthesisResult synthesize_metric(const Mat& a, const Mat& b, double gamma, const Mat& q_weight,
                                  const SynthesisOptions& options) {
    const auto n = a.rows();
    if (a.cols() != n || b.rows() != n || b.cols() < 1) throw InputError("synthesize_metric: A must be N x N, B N x m");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("synthesize_metric: gamma must lie in (0,1)");
    if (q_weight.rows() != n || q_weight.cols() != n) throw InputError("synthesize_metric: Q must be N x N");
    if ((q_weight - q_weight.transpose()).norm() > 1e-12 * std::max(1.0, q_weight.norm()) ||
        min_symmetric_eigenvalue(q_weight) <= 0.0) {
        throw InputError("synthesize_metric: Q must be symmetric positive definite");
    }
    const auto sv = controllability_singular_values(a, b);
    if (!(sv.sigma_min > options.controllability_floor)) {
        throw SynthesisError("synthesize_metric: (A,B) is not controllable (sigma_min(C) = " +
                             format_double(sv.sigma_min) + " <= floor " + format_double(options.controllability_floor) +
                             ")");
    }

    const auto m = b.cols();
    const Mat r = options.lqr_input_weight * Mat::Identity(m, m);
    const double target = std::sqrt(gamma);
    double weight = options.lqr_state_weight;
    Mat gain;
    double best_radius = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int attempt = 0; attempt <= options.lqr_scale_attempts; ++attempt) {
        const Mat q_lqr = weight * Mat::Identity(n, n);
        Mat k;
        try {
            k = lqr_gain(a, b, q_lqr, r, options.riccati_max_iters, options.riccati_tol);
        } catch (const NumericalError&) {
            weight *= 10.0;
            continue;
        }
        const double radius = spectral_radius(a - b * k);
        best_radius = std::min(best_radius, radius);
        if (radius < target) {
            gain = std::move(k);
            accepted = true;
            break;
        }
        weight *= 10.0;
    }
    if (!accepted) {
        std::ostringstream os;
        os << "synthesize_metric: no LQR gain reached rho(A - BK) < sqrt(gamma) = " << format_double(target)
           << " (best " << format_double(best_radius) << "); try a larger gamma";
        throw SynthesisError(os.str());
    }

    const Mat a_cl = a - b * gain;
    Mat metric = solve_scaled_lyapunov(a_cl, gamma, q_weight);
    Eigen::LLT<Mat> llt(metric);
    if (llt.info() != Eigen::Success) throw NumericalError("synthesize_metric: metric is not positive definite");
    Mat theta = llt.matrixU();

    Eigen::SelfAdjointEigenSolver<Mat> eig(metric, Eigen::EigenvaluesOnly);
    SynthesisResult out;
    out.spec.gain = gain;
    out.spec.metric = metric;
    out.spec.theta = theta;
    out.spec.gamma = gamma;
    out.spec.m_under = eig.eigenvalues().minCoeff();
    out.spec.m_bar = eig.eigenvalues().maxCoeff();
    out.spec.certificate = verify_lmi(a_cl, metric, gamma);
    out.lqr_state_weight = weight;
    out.closed_loop_moduli = eigen_moduli(a_cl);
    if (out.spec.certificate > 1e-8) {
        throw NumericalError("synthesize_metric: LMI certificate " + format_double(out.spec.certificate) +
                             " exceeds 1e-8");
    }
    return out;
}

Vec nfc_input(const ControllerSpec& spec, const Vec& u_d, const Vec& e) {
    if (u_d.size() != spec.gain.rows() || e.size() != spec.gain.cols()) {
        throw InputError("nfc_input: dimension mismatch");
    }
    return u_d - spec.gain * e;
}

// ---------------------------------------------------------------------------
// CRDR

double CrdrSubproblem::optimal_slack(const Vec& du) const {
    return std::max(0.0, (a + f * du).norm() - r0);
}

double CrdrSubproblem::objective(const Vec& du) const {
    const double dv = optimal_slack(du);
    return du.squaredNorm() + c_v * dv * dv;
}

CrdrSubproblem crdr_reduce(const ControllerSpec& spec, const Mat& a, const Mat& b, const Vec& e) {
    const auto n = spec.theta.rows();
    if (a.rows() != n || a.cols() != n || b.rows() != n || e.size() != n) {
        throw InputError("crdr_reduce: dimension mismatch");
    }
    CrdrSubproblem p;
    p.a = spec.theta * (a * e);
    p.f = spec.theta * b;
    p.r0 = spec.gamma * (spec.theta * e).norm() - spec.rho;
    p.c_v = spec.c_v;
    return p;
}

CrdrSolution solve_crdr(const CrdrSubproblem& problem, const CrdrOptions& options) {
    const auto m = problem.f.cols();
    if (problem.f.rows() != problem.a.size()) throw InputError("solve_crdr: dimension mismatch");
    if (!(problem.c_v > 0.0)) throw InputError("solve_crdr: c_v must be > 0");

    CrdrSolution sol;
    sol.delta_u = Vec::Zero(m);
    const double t0 = problem.a.norm();
    const double r0 = problem.r0;
    const double cv = problem.c_v;

    const auto finish = [&](Vec du) {
        sol.delta_u = std::move(du);
        const double t = (problem.a + problem.f * sol.delta_u).norm();
        sol.delta_v = std::max(0.0, t - r0);
        sol.objective = sol.delta_u.squaredNorm() + cv * sol.delta_v * sol.delta_v;
        sol.constraint_gap = t - (r0 + sol.delta_v);
        return sol;
    };

    if (t0 <= r0) return finish(Vec::Zero(m));

    Eigen::JacobiSVD<Mat> svd(problem.f, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s_all = svd.singularValues();
    const double s_tol = 1e-13 * std::max(1.0, s_all.size() > 0 ? s_all(0) : 0.0);
    Eigen::Index rank = 0;
    while (rank < s_all.size() && s_all(rank) > s_tol) ++rank;
    if (rank == 0) return finish(Vec::Zero(m));

    const Mat u_r = svd.matrixU().leftCols(rank);
    const Mat v_r = svd.matrixV().leftCols(rank);
    const Vec s = s_all.head(rank);
    const Vec alpha = u_r.transpose() * problem.a;
    const double perp2 = std::max(0.0, (problem.a - u_r * alpha).squaredNorm());
    const Vec alpha2 = alpha.array().square();
    const Vec s2 = s.array().square();

    const auto t_of = [&](double mu) {
        const Vec denom = (1.0 + mu * s2.array()).matrix();
        return std::sqrt((alpha2.array() / denom.array().square()).sum() + perp2);
    };
    const auto dt_of = [&](double mu, double t) {
        const Vec denom = (1.0 + mu * s2.array()).matrix();
        return -(alpha2.array() * s2.array() / denom.array().cube()).sum() / t;
    };
    const auto phi = [&](double mu) { return (mu - cv) * t_of(mu) + cv * r0; };
    const auto du_of = [&](double mu) {
        const Vec coef = (-mu * s.array() * alpha.array() / (1.0 + mu * s2.array())).matrix();
        return Vec(v_r * coef);
    };

    // Bracket the root of phi, phi(0) = cv (r0 - t0) < 0.
    double lo = 0.0;
    double hi = cv;
    if (phi(hi) <= 0.0) {
        const double limit = perp2 > 0.0 ? std::numeric_limits<double>::infinity()
                                         : std::sqrt((alpha2.array() / s2.array().square()).sum()) + cv * r0;
        if (limit <= 0.0) {
            // Optimum sits where a + F du = 0 (only possible when r0 < 0).
            const Vec coef = (-alpha.array() / s.array()).matrix();
            return finish(v_r * coef);
        }
        int grow = 0;
        while (phi(hi) <= 0.0) {
            lo = hi;
            hi *= 2.0;
            if (++grow > 2000 || !std::isfinite(hi)) throw SolverError("solve_crdr: could not bracket multiplier");
        }
    }

    const double scale = cv * std::max({t0, std::abs(r0), 1e-300});
    double mu = 0.5 * (lo + hi);
    int it = 0;
    bool converged = false;
    for (; it < options.max_iters; ++it) {
        const double t = t_of(mu);
        const double f = (mu - cv) * t + cv * r0;
        if (std::abs(f) <= options.tol * scale) {
            converged = true;
            break;
        }
        if (f < 0.0) lo = mu;
        else hi = mu;
        const double df = t + (mu - cv) * dt_of(mu, t);
        double next = df != 0.0 ? mu - f / df : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo <= 1e-16 * std::max(1.0, hi)) {
            mu = next;
            converged = true;
            break;
        }
        mu = next;
    }
    if (!converged) {
        std::ostringstream os;
        os << "solve_crdr: multiplier search did not converge in " << options.max_iters << " iterations (bracket ["
           << format_double(lo) << ", " << format_double(hi) << "], r0 " << format_double(r0) << ")";
        throw SolverError(os.str());
    }
    sol.iterations = it + 1;
    return finish(du_of(mu));
}

CrdrSolution crdr_step(const ControllerSpec& spec, const Mat& a, const Mat& b, const Vec& e, const Vec& u_d,
                       const CrdrOptions& options) {
    if (u_d.size() != b.cols()) throw InputError("crdr_step: reference input dimension mismatch");
    CrdrSolution sol = solve_crdr(crdr_reduce(spec, a, b, e), options);
    sol.u = u_d + sol.delta_u;
    return sol;
}

}  // namespace ckoop
