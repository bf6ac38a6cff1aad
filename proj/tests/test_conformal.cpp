#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include <ckoop/conformal.hpp>
#include <ckoop/dubins.hpp>
#include <ckoop/errors.hpp>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace ckoop;
using test::random_matrix;
using test::random_vector;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double unrolled_bound(double v0, double gamma, double rho, double m_bar, double m_under, double q,
                      const std::vector<double>& dv) {
    double v = v0;
    for (double d : dv) v = gamma * v + (-rho + std::sqrt(m_bar) * q) + d;
    return v / std::sqrt(m_under);
}

}  // namespace

TEST(Quantile, SmallExamples) {
    const std::vector<double> s = {3, 1, 4, 2};
    const auto r = conformal_quantile(s, 0.2);
    EXPECT_EQ(r.k_index, 4);
    EXPECT_EQ(r.q, 4.0);
    EXPECT_TRUE(r.finite());

    const std::vector<double> one = {5};
    const auto inf = conformal_quantile(one, 0.4);
    EXPECT_EQ(inf.k_index, 2);
    EXPECT_EQ(inf.q, kInf);
    EXPECT_FALSE(inf.finite());
}

TEST(Quantile, MatchesSortOracleOnUniformScores) {
    Rng rng(1);
    std::vector<double> s(199);
    for (auto& v : s) v = rng.uniform();
    const auto r = conformal_quantile(s, 0.1);
    EXPECT_EQ(r.k_index, 180);
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(r.q, sorted[179]);
    EXPECT_EQ(r.q, test::order_statistic_quantile(s, 0.1));
}

TEST(Quantile, RankHandlesRepresentationError) {
    EXPECT_EQ(conformal_rank(4, 0.2), 4);
    EXPECT_EQ(conformal_rank(9, 0.1), 9);
    EXPECT_EQ(conformal_rank(199, 0.1), 180);
}

TEST(Quantile, RejectsBadInput) {
    const std::vector<double> s = {1.0, 2.0};
    EXPECT_THROW((void)conformal_quantile(s, 0.0), InputError);
    EXPECT_THROW((void)conformal_quantile(s, 1.0), InputError);
    const std::vector<double> empty;
    EXPECT_THROW((void)conformal_quantile(empty, 0.1), InputError);
    const std::vector<double> bad = {1.0, std::nan("")};
    EXPECT_THROW((void)conformal_quantile(bad, 0.1), InputError);
}

TEST(Scores, ForwardNfcIdenticalTrajectoriesIsZero) {
    Rng rng(2);
    LiftedModel m;
    m.dictionary = Dictionary::identity_augmented(2, true);
    m.decoder = Decoder::projection(3, 2);
    m.a = random_matrix(rng, 3, 3);
    m.b = random_matrix(rng, 3, 1);
    const Vec x = random_vector(rng, 2);
    const Vec xn = random_vector(rng, 2);
    const Vec u = random_vector(rng, 1);
    EXPECT_EQ(forward_score_nfc(m, x, xn, u, x, xn, u), 0.0);
}

TEST(Scores, ForwardNfcLinearSystemIsZero) {
    Rng rng(3);
    LiftedModel m;
    m.dictionary = Dictionary::identity_augmented(2, false);
    m.decoder = Decoder::projection(2, 2);
    m.a = random_matrix(rng, 2, 2);
    m.b = random_matrix(rng, 2, 1);
    const Vec x = random_vector(rng, 2);
    const Vec xd = random_vector(rng, 2);
    const Vec u = random_vector(rng, 1);
    const Vec ud = random_vector(rng, 1);
    EXPECT_LT(forward_score_nfc(m, x, m.a * x + m.b * u, u, xd, m.a * xd + m.b * ud, ud), 1e-14);
}

TEST(Scores, ForwardNfcIsResidualDifference) {
    Rng rng(4);
    std::vector<Vec> obs;
    for (int i = 0; i < 30; ++i) obs.push_back(dubins_observation({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3), 1}));
    LiftedModel m;
    m.dictionary = make_rbf_augmented_dictionary(obs, false, 2, 1);
    m.decoder = Decoder::projection(6, 4);
    m.a = random_matrix(rng, 6, 6, 0.3);
    m.b = random_matrix(rng, 6, 1);
    const DubinsState s{0.1, 0.2, 0.3, 1};
    const DubinsState sd{0.0, 0.0, 0.0, 1};
    const Vec u = Vec::Constant(1, 1.3);
    const Vec ud = Vec::Constant(1, 2.0);
    const Vec x = dubins_observation(s);
    const Vec xn = dubins_observation(dubins_step(s, 0, u(0), 0.1));
    const Vec xd = dubins_observation(sd);
    const Vec xdn = dubins_observation(dubins_step(sd, 0, ud(0), 0.1));
    const double oracle = (residual(m, x, u, xn) - residual(m, xd, ud, xdn)).norm();
    EXPECT_NEAR(forward_score_nfc(m, x, xn, u, xd, xdn, ud), oracle, 1e-12);
}

TEST(Scores, ForwardCrdr) {
    EXPECT_EQ(forward_score_crdr(0, 0, 1), 0.0);
    EXPECT_NEAR(forward_score_crdr(0.2, 0.3, 1), 0.5, 1e-15);
    EXPECT_NEAR(forward_score_crdr(1, 1, 4), 3.0, 1e-15);
}

TEST(Bounds, DeltaR) {
    EXPECT_NEAR(delta_r(ControllerKind::NFC, 0.1, 0.9, 0.0, 1, 1), 1.0, 1e-12);
    EXPECT_EQ(delta_r(ControllerKind::CRDR, 0.3, 0.9, 0.3, 2, 1), 0.0);
    EXPECT_EQ(delta_r(ControllerKind::NFC, 0.0, 0.9, 0.5, 2, 1), 0.0);
    EXPECT_LT(delta_r(ControllerKind::CRDR, 0.1, 0.9, 0.3, 1, 1), 0.0);
}

TEST(Bounds, LatentProfileExamples) {
    const auto fixed = latent_bound_profile(2.0, 0.7, 10, 1.0, 4.0);
    for (double e : fixed) EXPECT_NEAR(e, 1.0, 1e-15);

    const auto geo = latent_bound_profile(1.0, 0.5, 5, 0.0, 1.0);
    ASSERT_EQ(geo.size(), 6u);
    for (int j = 0; j < 6; ++j) EXPECT_NEAR(geo[j], std::pow(0.5, j), 1e-15);

    const auto below = latent_bound_profile(0.0, 0.9, 20, 1.0, 1.0);
    for (int j = 0; j <= 20; ++j) EXPECT_NEAR(below[j], 1.0 - std::pow(0.9, j), 1e-14);
}

TEST(Bounds, LatentProfileRecursion) {
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        const double gamma = rng.uniform(0.05, 0.99);
        const double dr = rng.uniform(-1, 3);
        const auto eps = latent_bound_profile(rng.uniform(0, 5), gamma, 60, dr, rng.uniform(0.1, 3));
        for (std::size_t j = 0; j + 1 < eps.size(); ++j) {
            EXPECT_NEAR(eps[j + 1] - dr, gamma * (eps[j] - dr), 1e-13 * std::max(1.0, std::abs(eps[j])));
        }
    }
}

TEST(Bounds, TrajectoryExamples) {
    const std::vector<double> zeros(7, 0.0);
    EXPECT_NEAR(trajectory_bound(2.0, 0.8, std::sqrt(4.0) * 0.1, 4.0, 1.0, 0.1, zeros), std::pow(0.8, 7) * 2.0, 1e-14);
    const std::vector<double> one = {0.1};
    EXPECT_NEAR(trajectory_bound(0.0, 0.9, 0.0, 1, 1, 0.2, one), 0.3, 1e-15);
    EXPECT_NEAR(trajectory_bound(3.0, 0.9, 0.0, 1, 4, 0.2, {}), 1.5, 1e-15);
}

TEST(Bounds, TrajectoryMatchesUnrolledRecursion) {
    Rng rng(6);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> dv(static_cast<std::size_t>(rng.index(80)));
        for (auto& d : dv) d = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0, 0.5);
        const double v0 = rng.uniform(0, 3);
        const double gamma = rng.uniform(0.1, 0.99);
        const double rho = rng.uniform(0, 0.5);
        const double mu = rng.uniform(0.1, 2);
        const double mb = mu + rng.uniform(0, 3);
        const double q = rng.uniform(0, 1);
        const double oracle = unrolled_bound(v0, gamma, rho, mb, mu, q, dv);
        EXPECT_NEAR(trajectory_bound(v0, gamma, rho, mb, mu, q, dv), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
    }
}

TEST(Bounds, StateBound) {
    EXPECT_EQ(state_bound(0.0, 1.0, 0.7), 0.7);
    EXPECT_EQ(state_bound(0.25, 3.0, 0.0), 0.5);
    EXPECT_NEAR(state_bound(0.4691, 1.0, 0.0), 0.9382, 1e-15);
}

TEST(Bounds, UnionDelta) {
    EXPECT_NEAR(union_bound_delta(0.1, 10), 0.01, 1e-17);
    EXPECT_EQ(union_bound_delta(0.1, 1), 0.1);
    EXPECT_NEAR(union_bound_delta(0.5, 50), 0.01, 1e-17);
    EXPECT_THROW((void)union_bound_delta(0.1, 0), InputError);
}

TEST(Bounds, ProfileCombinesPieces) {
    const BoundProfile p = make_bound_profile(ControllerKind::CRDR, 1.0, 0.9, 0.05, 2.0, 1.0, 0.2, 0.1, 1.5, 10,
                                              0.1, 0.05);
    ASSERT_EQ(p.epsilon.size(), 11u);
    ASSERT_EQ(p.state_bound.size(), 11u);
    EXPECT_NEAR(p.delta_r, (0.2 - 0.05) / 0.1, 1e-12);
    for (std::size_t j = 0; j < p.epsilon.size(); ++j)
        EXPECT_NEAR(p.state_bound[j], 2 * 0.1 + 1.5 * p.epsilon[j], 1e-14);
    std::stringstream ss;
    write_bound_profile_csv(p, ss);
    EXPECT_NE(ss.str().find("k,epsilon,state_bound"), std::string::npos);
}

TEST(Lipschitz, LinearDecoders) {
    const auto p = estimate_lipschitz(Decoder::projection(6, 4), {}, 1.5);
    EXPECT_EQ(p.value, 1.0);
    EXPECT_TRUE(p.exact);
    const auto two = estimate_lipschitz(Decoder::linear(2.0 * Mat::Identity(3, 3)), {}, 1.5);
    EXPECT_NEAR(two.value, 2.0, 1e-15);
}

TEST(Lipschitz, TrainedDecoderDominatesProbes) {
    const Decoder dec = Decoder::trained(Mlp::random(3, 10, 2, 9));
    Rng rng(7);
    std::vector<std::pair<Vec, Vec>> samples;
    for (int i = 0; i < 200; ++i) samples.emplace_back(random_vector(rng, 3), random_vector(rng, 3));
    const auto est = estimate_lipschitz(dec, samples, 1.0);
    EXPECT_FALSE(est.exact);
    Rng probe(8);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const Vec z = random_vector(probe, 3);
        Vec dir = random_vector(probe, 3);
        dir.normalize();
        const double h = 1e-4;
        worst = std::max(worst, (decode(dec, z + h * dir) - decode(dec, z - h * dir)).norm() / (2 * h));
    }
    EXPECT_GE(est.value * 1.5, worst);
}

TEST(Coverage, Examples) {
    const std::vector<double> s = {1, 2, 3};
    EXPECT_EQ(empirical_coverage(kInf, s), 1.0);
    EXPECT_EQ(empirical_coverage(0.5, s), 0.0);
    EXPECT_NEAR(empirical_coverage(2.0, s), 2.0 / 3.0, 1e-15);
}

TEST(Coverage, CalibrationCsvRoundTrip) {
    const std::vector<double> s = {0.3, 0.1, 0.2, 0.5, 0.4};
    const auto r = conformal_quantile(s, 0.2, ScoreKind::RoundTrip);
    std::stringstream ss;
    write_calibration_csv(r, ss, {{"alpha", "0.1"}, {"warning", "none"}});
    const auto back = read_calibration_csv(ss);
    EXPECT_EQ(back.kind, ScoreKind::RoundTrip);
    EXPECT_EQ(back.q, r.q);
    EXPECT_EQ(back.k_index, r.k_index);
    EXPECT_EQ(back.m, 5);
    EXPECT_EQ(back.delta, 0.2);
    EXPECT_EQ(back.meta("alpha").value_or(""), "0.1");
    EXPECT_FALSE(back.meta("missing").has_value());
}

TEST(Coverage, EnumNamesRoundTrip) {
    for (auto k : {ScoreKind::ForwardNFC, ScoreKind::ForwardCRDR, ScoreKind::RoundTrip})
        EXPECT_EQ(parse_score_kind(to_string(k)), k);
    for (auto k : {ControllerKind::NFC, ControllerKind::CRDR}) EXPECT_EQ(parse_controller_kind(to_string(k)), k);
    EXPECT_THROW((void)parse_controller_kind("pid"), Error);
}
