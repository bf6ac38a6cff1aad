#include "ckoop/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"

namespace ckoop {

std::string to_string(ScoreKind kind) {
    switch (kind) {
        case ScoreKind::ForwardNFC: return "ForwardNFC";
        case ScoreKind::ForwardCRDR: return "ForwardCRDR";
        case ScoreKind::RoundTrip: return "RoundTrip";
    }
    return "unknown";
}

ScoreKind parse_score_kind(std::string_view text) {
    if (text == "ForwardNFC") return ScoreKind::ForwardNFC;
    if (text == "ForwardCRDR") return ScoreKind::ForwardCRDR;
    if (text == "RoundTrip") return ScoreKind::RoundTrip;
    throw InputError("unknown score kind '" + std::string(text) + "'");
}

std::string to_string(ControllerKind kind) { return kind == ControllerKind::NFC ? "nfc" : "crdr"; }

ControllerKind parse_controller_kind(std::string_view text) {
    if (text == "nfc" || text == "NFC") return ControllerKind::NFC;
    if (text == "crdr" || text == "CRDR") return ControllerKind::CRDR;
    throw InputError("unknown controller kind '" + std::string(text) + "'");
}

bool CalibrationResult::finite() const noexcept { return std::isfinite(q); }

long long conformal_rank(std::size_t m, double delta) {
    const double x = static_cast<double>(m + 1) * (1.0 - delta);
    const double nearest = std::round(x);
    if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<long long>(nearest);
    return static_cast<long long>(std::ceil(x));
}

CalibrationResult conformal_quantile(std::span<const double> scores, double delta, ScoreKind kind) {
    if (scores.empty()) throw InputError("conformal_quantile: no calibration scores");
    if (!(delta > 0.0 && delta < 1.0)) throw InputError("conformal_quantile: delta must lie in (0,1)");
    for (double s : scores) {
        if (!std::isfinite(s)) throw InputError("conformal_quantile: scores must be finite");
    }
    CalibrationResult out;
    out.kind = kind;
    out.delta = delta;
    out.scores_sorted.assign(scores.begin(), scores.end());
    std::stable_sort(out.scores_sorted.begin(), out.scores_sorted.end());
    out.k_index = conformal_rank(out.scores_sorted.size(), delta);
    if (out.k_index > static_cast<long long>(out.scores_sorted.size())) {
        out.q = std::numeric_limits<double>::infinity();
    } else {
        out.q = out.scores_sorted[static_cast<std::size_t>(std::max(1LL, out.k_index) - 1)];
    }
    return out;
}

double forward_score_nfc(const LiftedModel& model, const Vec& x_k, const Vec& x_next, const Vec& u_k,
                         const Vec& x_d_k, const Vec& x_d_next, const Vec& u_d_k) {
    return (residual(model, x_k, u_k, x_next) - residual(model, x_d_k, u_d_k, x_d_next)).norm();
}

double forward_score_crdr(double delta_d, double delta_v, double m_bar) {
    if (delta_d < 0 || delta_v < 0 || !(m_bar > 0)) throw InputError("forward_score_crdr: arguments must be >= 0");
    return std::sqrt(m_bar) * delta_d + delta_v;
}

double delta_r(ControllerKind kind, double q, double gamma, double rho, double m_bar, double m_under) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("delta_r: gamma must lie in (0,1)");
    if (!(m_under > 0.0)) throw InputError("delta_r: m_under must be > 0");
    const double denom = (1.0 - gamma) * std::sqrt(m_under);
    if (kind == ControllerKind::NFC) return std::sqrt(m_bar) * q / denom;
    return (q - rho) / denom;
}

std::vector<double> latent_bound_profile(double v0, double gamma, int horizon, double delta_r, double m_under) {
    if (horizon < 0) throw InputError("latent_bound_profile: horizon must be >= 0");
    if (!(m_under > 0.0)) throw InputError("latent_bound_profile: m_under must be > 0");
    std::vector<double> eps(static_cast<std::size_t>(horizon) + 1);
    if (!std::isfinite(delta_r)) {
        std::fill(eps.begin(), eps.end(), delta_r);
        return eps;
    }
    double gap = v0 / std::sqrt(m_under) - delta_r;
    for (auto& e : eps) {
        e = gap + delta_r;
        gap *= gamma;
    }
    return eps;
}

double trajectory_bound(double v0, double gamma, double rho, double m_bar, double m_under, double q,
                        std::span<const double> delta_v_history) {
    if (!(m_under > 0.0)) throw InputError("trajectory_bound: m_under must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("trajectory_bound: gamma must lie in (0,1)");
    const auto horizon = static_cast<int>(delta_v_history.size());
    const double gk = std::pow(gamma, horizon);
    CompensatedSum acc;
    acc.add(gk * v0);
    if (horizon > 0) acc.add((1.0 - gk) / (1.0 - gamma) * (-rho + std::sqrt(m_bar) * q));
    // sum_k gamma^{K-1-k} dv_k, weights built from the newest entry backwards.
    double w = 1.0;
    for (int k = horizon - 1; k >= 0; --k) {
        acc.add(w * delta_v_history[static_cast<std::size_t>(k)]);
        w *= gamma;
    }
    return acc.value() / std::sqrt(m_under);
}

double state_bound(double q_rt, double lipschitz, double epsilon) {
    if (q_rt < 0 || lipschitz < 0) throw InputError("state_bound: q_rt and L must be >= 0");
    return 2.0 * q_rt + lipschitz * epsilon;
}

double union_bound_delta(double alpha, int horizon) {
    if (horizon < 1) throw InputError("union_bound_delta: horizon must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("union_bound_delta: alpha must lie in (0,1)");
    return alpha / static_cast<double>(horizon);
}

LipschitzEstimate estimate_lipschitz(const Decoder& decoder, std::span<const std::pair<Vec, Vec>> samples,
                                     double safety) {
    if (decoder.kind() != DecoderKind::TrainedDecoder) {
        Eigen::JacobiSVD<Mat> svd(decoder.weights());
        return {svd.singularValues()(0), true};
    }
    if (safety < 1.0) throw InputError("estimate_lipschitz: safety factor must be >= 1");
    if (samples.empty()) throw InputError("estimate_lipschitz: need at least one sample pair");
    const Mlp& net = decoder.network();
    double best = 0.0;
    std::size_t used = 0;
    for (const auto& [z1, z2] : samples) {
        // Local slope at each sample: spectral norm of the network Jacobian.
        for (const Vec* z : {&z1, &z2}) {
            const Vec h = (net.w1 * *z + net.b1).array().tanh().matrix();
            const Mat jac = net.w2 * (1.0 - h.array().square()).matrix().asDiagonal() * net.w1;
            best = std::max(best, Eigen::JacobiSVD<Mat>(jac).singularValues()(0));
        }
        const double dz = (z1 - z2).norm();
        if (dz == 0.0) continue;
        ++used;
        best = std::max(best, (decode(decoder, z1) - decode(decoder, z2)).norm() / dz);
    }
    if (used == 0) throw InputError("estimate_lipschitz: all sample pairs coincide");
    return {safety * best, false};
}

double empirical_coverage(double q, std::span<const double> test_scores) {
    if (test_scores.empty()) throw InputError("empirical_coverage: no test scores");
    std::size_t hit = 0;
    for (double s : test_scores) hit += (s <= q) ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(test_scores.size());
}

BoundProfile make_bound_profile(ControllerKind kind, double v0, double gamma, double rho, double m_bar,
                                double m_under, double q_fwd, double q_rt, double lipschitz, int horizon,
                                double alpha, double beta) {
    BoundProfile p;
    p.horizon = horizon;
    p.alpha = alpha;
    p.beta = beta;
    p.v0 = v0;
    p.lipschitz = lipschitz;
    p.delta_r = delta_r(kind, q_fwd, gamma, rho, m_bar, m_under);
    p.epsilon = latent_bound_profile(v0, gamma, horizon, p.delta_r, m_under);
    p.state_bound.reserve(p.epsilon.size());
    for (double e : p.epsilon) p.state_bound.push_back(state_bound(q_rt, lipschitz, e));
    return p;
}

void write_calibration_csv(const CalibrationResult& result, std::ostream& out,
                           const std::vector<std::pair<std::string, std::string>>& metadata) {
    for (const auto& [k, v] : metadata) out << "# " << k << '=' << v << '\n';
    out << "kind,delta,m,k_index,q\n";
    out << to_string(result.kind) << ',' << format_double(result.delta) << ',' << result.m() << ',' << result.k_index
        << ',' << format_double(result.q) << '\n';
}

std::optional<std::string> CalibrationRecord::meta(std::string_view key) const {
    for (const auto& [k, v] : metadata) {
        if (k == key) return v;
    }
    return std::nullopt;
}

CalibrationRecord read_calibration_csv(std::istream& in) {
    const csv::Table t = csv::read(in);
    if (t.rows.size() != 1) throw InputError("calibration file must contain exactly one data row");
    const auto& row = t.rows.front();
    CalibrationRecord r;
    r.kind = parse_score_kind(row[t.column("kind")]);
    r.delta = parse_double(row[t.column("delta")]);
    r.m = parse_int(row[t.column("m")]);
    r.k_index = parse_int(row[t.column("k_index")]);
    r.q = parse_double(row[t.column("q")]);
    r.metadata.assign(t.metadata.begin(), t.metadata.end());
    return r;
}

void write_bound_profile_csv(const BoundProfile& profile, std::ostream& out) {
    out << "k,epsilon,state_bound\n";
    for (std::size_t k = 0; k < profile.epsilon.size(); ++k) {
        out << k << ',' << format_double(profile.epsilon[k]) << ','
            << format_double(k < profile.state_bound.size() ? profile.state_bound[k]
                                                             : std::numeric_limits<double>::quiet_NaN())
            << '\n';
    }
}

}  // namespace ckoop
