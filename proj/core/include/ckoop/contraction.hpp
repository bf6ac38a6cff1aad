#pragma once

#include <functional>
#include <limits>
#include <iosfwd>
#include <span>
#include <vector>

#include "ckoop/lifting.hpp"

namespace ckoop {

using ClosedLoopMap = std::function<Vec(const Vec&)>;

// W(x) = G(x)^T M G(x), G the lifting Jacobian.
[[nodiscard]] Mat metric_at(const Dictionary& dictionary, const Mat& metric, const Vec& x);

struct ContractionOptions {
    double jac_step = 1e-5;
    double tolerance = 1e-6;
    // Samples with sigma_min(G) below this are counted as violating the
    // full-column-rank hypothesis.
    double rank_tolerance = 1e-8;
};

struct ContractionReport {
    int samples = 0;
    int excluded = 0;                  // non-finite closed-loop evaluations
    double max_violation = -std::numeric_limits<double>::infinity();
    double min_jacobian_sigma = std::numeric_limits<double>::infinity();
    int rank_deficient = 0;
    bool hypothesis_violated = false;  // some sample had a rank-deficient G
    bool pass = false;                 // max_violation <= tolerance
    double gamma = 0.0;
    double tolerance = 1e-6;
};

// For every sample x: F = d f_cl / dx by central differences and the largest
// eigenvalue of F^T W(f_cl(x)) F - gamma W(x).
[[nodiscard]] ContractionReport verify_contraction(const Dictionary& dictionary, const Mat& metric, double gamma,
                                                   const ClosedLoopMap& closed_loop, std::span<const Vec> samples,
                                                   const ContractionOptions& options = {});

// Same, with a separate closed-loop map per sample (e.g. a time-varying
// reference); maps.size() must equal samples.size().
[[nodiscard]] ContractionReport verify_contraction(const Dictionary& dictionary, const Mat& metric, double gamma,
                                                   std::span<const ClosedLoopMap> maps, std::span<const Vec> samples,
                                                   const ContractionOptions& options = {});

// Single CSV row with header
// samples,excluded,max_violation,min_jacobian_sigma,rank_deficient,pass,gamma,tolerance
void write_contraction_csv(const ContractionReport& report, std::ostream& out);

}  // namespace ckoop
