#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckoop/koopman_id.hpp"
#include "ckoop/lifting.hpp"

namespace ckoop {

enum class ScoreKind { ForwardNFC, ForwardCRDR, RoundTrip };
enum class ControllerKind { NFC, CRDR };

[[nodiscard]] std::string to_string(ScoreKind kind);
[[nodiscard]] ScoreKind parse_score_kind(std::string_view text);
[[nodiscard]] std::string to_string(ControllerKind kind);
[[nodiscard]] ControllerKind parse_controller_kind(std::string_view text);

// Split conformal calibration: q is the k-th smallest score (1-based) with
// k = ceil((m + 1)(1 - delta)), or +inf when k > m.
struct CalibrationResult {
    ScoreKind kind = ScoreKind::ForwardNFC;
    std::vector<double> scores_sorted;
    double delta = 0.1;
    long long k_index = 0;
    double q = 0.0;

    [[nodiscard]] std::size_t m() const noexcept { return scores_sorted.size(); }
    [[nodiscard]] bool finite() const noexcept;
};

// ceil((m + 1)(1 - delta)), treating products within 1e-9 (relative) of an
// integer as that integer so that e.g. 5 * 0.8 gives 4 rather than 5.
[[nodiscard]] long long conformal_rank(std::size_t m, double delta);

[[nodiscard]] CalibrationResult conformal_quantile(std::span<const double> scores, double delta,
                                                   ScoreKind kind = ScoreKind::ForwardNFC);

// |residual(x_k, u_k, x_{k+1}) - residual(x_d_k, u_d_k, x_d_{k+1})|
[[nodiscard]] double forward_score_nfc(const LiftedModel& model, const Vec& x_k, const Vec& x_next, const Vec& u_k,
                                       const Vec& x_d_k, const Vec& x_d_next, const Vec& u_d_k);

// sqrt(m_bar) * delta_d + delta_v
[[nodiscard]] double forward_score_crdr(double delta_d, double delta_v, double m_bar);

// Asymptotic radius of the latent error bound.
//   NFC:  sqrt(m_bar) q / ((1 - gamma) sqrt(m_under))
//   CRDR: (q - rho) / ((1 - gamma) sqrt(m_under)); may be negative when rho > q.
[[nodiscard]] double delta_r(ControllerKind kind, double q, double gamma, double rho, double m_bar, double m_under);

// eps_j = gamma^j (v0 / sqrt(m_under) - delta_r) + delta_r, j = 0..horizon
[[nodiscard]] std::vector<double> latent_bound_profile(double v0, double gamma, int horizon, double delta_r,
                                                       double m_under);

// (1/sqrt(m_under)) (gamma^K v0 + (1 - gamma^K)/(1 - gamma) (-rho + sqrt(m_bar) q)
//                    + sum_k gamma^{K-1-k} dv_k),  K = history.size().
// K = 0 gives v0 / sqrt(m_under).
[[nodiscard]] double trajectory_bound(double v0, double gamma, double rho, double m_bar, double m_under, double q,
                                      std::span<const double> delta_v_history);

// 2 q_rt + L eps
[[nodiscard]] double state_bound(double q_rt, double lipschitz, double epsilon);

// alpha / K
[[nodiscard]] double union_bound_delta(double alpha, int horizon);

struct LipschitzEstimate {
    double value = 0.0;
    // True for linear decoders (operator 2-norm); false for the sampled
    // heuristic used with trained decoders.
    bool exact = false;
};

[[nodiscard]] LipschitzEstimate estimate_lipschitz(const Decoder& decoder,
                                                   std::span<const std::pair<Vec, Vec>> samples, double safety);

// Fraction of test scores <= q.
[[nodiscard]] double empirical_coverage(double q, std::span<const double> test_scores);

// Per-step latent/state bound for one controller, as evaluated along a rollout.
struct BoundProfile {
    int horizon = 0;
    double alpha = 0.1;
    double beta = 0.0;
    double delta_r = 0.0;
    std::vector<double> epsilon;
    std::vector<double> state_bound;
    double lipschitz = 1.0;
    double v0 = 0.0;
};

[[nodiscard]] BoundProfile make_bound_profile(ControllerKind kind, double v0, double gamma, double rho, double m_bar,
                                              double m_under, double q_fwd, double q_rt, double lipschitz,
                                              int horizon, double alpha, double beta);

// CSV: kind,delta,m,k_index,q  (one row), optional `# key=value` metadata.
void write_calibration_csv(const CalibrationResult& result, std::ostream& out,
                           const std::vector<std::pair<std::string, std::string>>& metadata = {});
struct CalibrationRecord {
    ScoreKind kind = ScoreKind::ForwardNFC;
    double delta = 0.0;
    long long m = 0;
    long long k_index = 0;
    double q = 0.0;
    std::vector<std::pair<std::string, std::string>> metadata;

    [[nodiscard]] std::optional<std::string> meta(std::string_view key) const;
};
[[nodiscard]] CalibrationRecord read_calibration_csv(std::istream& in);

// CSV: k,epsilon,state_bound
void write_bound_profile_csv(const BoundProfile& profile, std::ostream& out);

}  // namespace ckoop
