#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ckoop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Neumaier-compensated accumulator. Sums are stable to the last few ulps
// regardless of the order terms arrive in.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

[[nodiscard]] double compensated_sum(std::span<const double> values) noexcept;

[[nodiscard]] bool all_finite(const Mat& m) noexcept;
[[nodiscard]] bool all_finite(const Vec& v) noexcept;

// Shortest representation that round-trips exactly; "inf", "-inf", "nan" for
// non-finite values. Output is locale-independent.
[[nodiscard]] std::string format_double(double x);

// Inverse of format_double. Throws InputError on malformed text.
[[nodiscard]] double parse_double(std::string_view text);
[[nodiscard]] long long parse_int(std::string_view text);

// Largest eigenvalue of the symmetric part of `s`.
[[nodiscard]] double max_symmetric_eigenvalue(const Mat& s);
[[nodiscard]] double min_symmetric_eigenvalue(const Mat& s);

// Deterministic counter-based seed derivation (SplitMix64 finalizer).
[[nodiscard]] std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) noexcept;

// Small, portable PRNG wrapper: the same seed gives the same draws on every
// platform, unlike the std:: distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1).
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Standard normal via Box-Muller.
    double normal() noexcept;
    std::size_t index(std::size_t n) noexcept;

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ckoop
