#include "ckoop/numeric.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include "ckoop/errors.hpp"

namespace ckoop {

double compensated_sum(std::span<const double> values) noexcept {
    CompensatedSum acc;
    for (double v : values) acc.add(v);
    return acc.value();
}

bool all_finite(const Mat& m) noexcept { return m.allFinite(); }
bool all_finite(const Vec& v) noexcept { return v.allFinite(); }

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) throw NumericalError("format_double: conversion failed");
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    if (text == "nan" || text == "NA") return std::numeric_limits<double>::quiet_NaN();
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw InputError("not a number: '" + std::string(text) + "'");
    }
    return value;
}

long long parse_int(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw InputError("not an integer: '" + std::string(text) + "'");
    }
    return value;
}

double max_symmetric_eigenvalue(const Mat& s) {
    const Mat sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    return eig.eigenvalues().maxCoeff();
}

double min_symmetric_eigenvalue(const Mat& s) {
    const Mat sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(sym, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
    return eig.eigenvalues().minCoeff();
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) noexcept {
    std::uint64_t s = root;
    std::uint64_t a = splitmix64(s);
    s = a ^ (stream * 0xD1B54A32D192ED03ULL);
    std::uint64_t b = splitmix64(s);
    s = b ^ (index * 0x8CB92BA72F3D8DD7ULL);
    return splitmix64(s);
}

std::uint64_t Rng::next_u64() noexcept { return splitmix64(state_); }

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

std::size_t Rng::index(std::size_t n) noexcept {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % (n == 0 ? 1 : n);
}

}  // namespace ckoop
