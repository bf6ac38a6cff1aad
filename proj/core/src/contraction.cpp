#include "ckoop/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ckoop/errors.hpp"

namespace ckoop {

Mat metric_at(const Dictionary& dictionary, const Mat& metric, const Vec& x) {
    if (metric.rows() != dictionary.latent_dim() || metric.cols() != dictionary.latent_dim()) {
        throw InputError("metric_at: metric must be N x N");
    }
    const Mat g = lift_jacobian(dictionary, x);
    const Mat w = g.transpose() * metric * g;
    return 0.5 * (w + w.transpose());
}

namespace {

ContractionReport verify_impl(const Dictionary& dictionary, const Mat& metric, double gamma,
                              const std::function<const ClosedLoopMap&(std::size_t)>& map_for,
                              std::span<const Vec> samples, const ContractionOptions& options) {
    ContractionReport report;
    report.gamma = gamma;
    report.tolerance = options.tolerance;
    const auto n = dictionary.input_dim();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vec& x = samples[i];
        const ClosedLoopMap& f = map_for(i);
        if (x.size() != n || !x.allFinite()) {
            ++report.excluded;
            continue;
        }
        const Vec fx = f(x);
        Mat jac(n, n);
        bool finite = fx.allFinite() && fx.size() == n;
        for (Eigen::Index j = 0; j < n && finite; ++j) {
            Vec xp = x;
            Vec xm = x;
            xp(j) += options.jac_step;
            xm(j) -= options.jac_step;
            const Vec fp = f(xp);
            const Vec fm = f(xm);
            if (!fp.allFinite() || !fm.allFinite()) {
                finite = false;
                break;
            }
            jac.col(j) = (fp - fm) / (2.0 * options.jac_step);
        }
        if (!finite) {
            ++report.excluded;
            continue;
        }
        const Mat g = lift_jacobian(dictionary, x);
        const double sigma = Eigen::JacobiSVD<Mat>(g).singularValues().minCoeff();
        report.min_jacobian_sigma = std::min(report.min_jacobian_sigma, sigma);
        if (sigma <= options.rank_tolerance) ++report.rank_deficient;

        const Mat w_next = metric_at(dictionary, metric, fx);
        const Mat w_here = metric_at(dictionary, metric, x);
        const double violation = max_symmetric_eigenvalue(jac.transpose() * w_next * jac - gamma * w_here);
        report.max_violation = std::max(report.max_violation, violation);
        ++report.samples;
    }
    report.hypothesis_violated = report.rank_deficient > 0;
    report.pass = report.samples > 0 && report.max_violation <= options.tolerance;
    return report;
}

}  // namespace

ContractionReport verify_contraction(const Dictionary& dictionary, const Mat& metric, double gamma,
                                     const ClosedLoopMap& closed_loop, std::span<const Vec> samples,
                                     const ContractionOptions& options) {
    return verify_impl(
        dictionary, metric, gamma, [&](std::size_t) -> const ClosedLoopMap& { return closed_loop; }, samples,
        options);
}

ContractionReport verify_contraction(const Dictionary& dictionary, const Mat& metric, double gamma,
                                     std::span<const ClosedLoopMap> maps, std::span<const Vec> samples,
                                     const ContractionOptions& options) {
    if (maps.size() != samples.size()) throw InputError("verify_contraction: one map per sample required");
    return verify_impl(
        dictionary, metric, gamma, [&](std::size_t i) -> const ClosedLoopMap& { return maps[i]; }, samples, options);
}

void write_contraction_csv(const ContractionReport& report, std::ostream& out) {
    out << "samples,excluded,max_violation,min_jacobian_sigma,rank_deficient,pass,gamma,tolerance\n";
    out << report.samples << ',' << report.excluded << ',' << format_double(report.max_violation) << ','
        << format_double(report.min_jacobian_sigma) << ',' << report.rank_deficient << ','
        << (report.pass ? "true" : "false") << ',' << format_double(report.gamma) << ','
        << format_double(report.tolerance) << '\n';
}

}  // namespace ckoop
