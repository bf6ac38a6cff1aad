#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <ckoop/dubins.hpp>
#include <ckoop/errors.hpp>
#include <ckoop/lifting.hpp>

#include "test_support.hpp"

using namespace ckoop;
using test::random_matrix;
using test::random_vector;

namespace {

Mat fd_jacobian(const Dictionary& d, const Vec& x, double h) {
    Mat j(d.latent_dim(), d.input_dim());
    for (int c = 0; c < d.input_dim(); ++c) {
        Vec xp = x;
        Vec xm = x;
        xp(c) += h;
        xm(c) -= h;
        j.col(c) = (lift(d, xp) - lift(d, xm)) / (2.0 * h);
    }
    return j;
}

Vec tanh_net(const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2, const Vec& x) {
    Vec h(w1.rows());
    for (Eigen::Index i = 0; i < w1.rows(); ++i) {
        double s = b1(i);
        for (Eigen::Index j = 0; j < w1.cols(); ++j) s += w1(i, j) * x(j);
        h(i) = std::tanh(s);
    }
    Vec out(w2.rows());
    for (Eigen::Index i = 0; i < w2.rows(); ++i) {
        double s = b2(i);
        for (Eigen::Index j = 0; j < w2.cols(); ++j) s += w2(i, j) * h(j);
        out(i) = s;
    }
    return out;
}

Dictionary sample_rbf_augmented(Rng& rng, int n, int k, bool constant) {
    Mat centers = random_matrix(rng, k, n);
    Vec widths = (random_vector(rng, k).array().abs() + 0.5).matrix();
    return Dictionary::identity_augmented(n, constant, centers, widths);
}

}  // namespace

TEST(Lift, IdentityWithConstant) {
    const Dictionary d = Dictionary::identity_augmented(2, true);
    const Vec z = lift(d, Vec::Map(std::vector<double>{1.0, 2.0}.data(), 2));
    ASSERT_EQ(z.size(), 3);
    EXPECT_EQ(z(0), 1.0);
    EXPECT_EQ(z(1), 2.0);
    EXPECT_EQ(z(2), 1.0);
}

TEST(Lift, DubinsObservationGivesSixLatentStates) {
    std::vector<Vec> states;
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        DubinsState s{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-3, 3), 1.0};
        states.push_back(dubins_observation(s));
    }
    const Dictionary d = make_rbf_augmented_dictionary(states, false, 2, 11);
    EXPECT_EQ(d.latent_dim(), 6);
    const Vec z = lift(d, states[0]);
    EXPECT_EQ(z.size(), 6);
    EXPECT_EQ(z.head(4), states[0]);
}

TEST(Lift, RadialBasisPeakIsOne) {
    Mat c(1, 2);
    c << 0.3, -0.7;
    Vec w(1);
    w << 1.0;
    const Dictionary d = Dictionary::radial_basis(2, c, w);
    const Vec z = lift(d, c.row(0).transpose());
    EXPECT_DOUBLE_EQ(z(0), 1.0);
}

TEST(Lift, DimensionMismatchThrows) {
    const Dictionary d = Dictionary::identity_augmented(3, false);
    EXPECT_THROW((void)lift(d, Vec::Zero(2)), InputError);
    const Decoder p = Decoder::projection(3, 2);
    EXPECT_THROW((void)decode(p, Vec::Zero(4)), InputError);
}

TEST(Lift, InvalidWidthsRejected) {
    Mat c = Mat::Zero(1, 2);
    Vec w(1);
    w << 0.0;
    EXPECT_THROW((void)Dictionary::radial_basis(2, c, w), InputError);
}

TEST(Decode, ProjectionTakesPrefix) {
    const Decoder p = Decoder::projection(3, 2);
    Vec z(3);
    z << 3, 4, 9;
    const Vec x = decode(p, z);
    ASSERT_EQ(x.size(), 2);
    EXPECT_EQ(x(0), 3.0);
    EXPECT_EQ(x(1), 4.0);
}

TEST(Decode, LinearIdentityBlockEqualsProjection) {
    const Decoder lin = Decoder::linear(Mat::Identity(2, 3));
    const Decoder p = Decoder::projection(3, 2);
    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
        const Vec z = random_vector(rng, 3);
        EXPECT_EQ(decode(lin, z), decode(p, z));
    }
}

TEST(Decode, LinearFitReproducesHeldOutTargets) {
    Rng rng(3);
    const Dictionary d = sample_rbf_augmented(rng, 3, 4, true);
    std::vector<Vec> train;
    for (int i = 0; i < 200; ++i) train.push_back(random_vector(rng, 3));
    const Decoder dec = fit_linear_decoder(d, train, 0.0);
    for (int i = 0; i < 50; ++i) {
        const Vec x = random_vector(rng, 3);
        EXPECT_LT((decode(dec, lift(d, x)) - x).norm(), 1e-8);
    }
}

TEST(Decode, LinearFitMatchesNormalEquations) {
    // Features (x, exp(-x^2/2)) on x in {-1, 0, 1}.
    Mat c = Mat::Zero(1, 1);
    Vec w = Vec::Ones(1);
    const Dictionary d = Dictionary::identity_augmented(1, false, c, w);
    std::vector<Vec> xs;
    for (double v : {-1.0, 0.0, 1.0}) xs.push_back(Vec::Constant(1, v));
    const double ridge = 0.25;
    const Decoder dec = fit_linear_decoder(d, xs, ridge);

    // Hand oracle: features phi = (x, g), g(-1) = g(1) = e^{-1/2}, g(0) = 1.
    const double e = std::exp(-0.5);
    const double s_xx = 2.0;              // sum x^2
    const double s_xg = -e + e;           // sum x g = 0
    const double s_gg = 2.0 * e * e + 1;  // sum g^2
    const double r_x = 2.0;               // sum x * x (target x)
    const double r_g = -e + e;            // sum g * x = 0
    // (G + ridge I) w = r, G diagonal since s_xg = 0.
    ASSERT_EQ(s_xg, 0.0);
    const double w0 = r_x / (s_xx + ridge);
    const double w1 = r_g / (s_gg + ridge);
    ASSERT_EQ(dec.weights().rows(), 1);
    EXPECT_NEAR(dec.weights()(0, 0), w0, 1e-12);
    EXPECT_NEAR(dec.weights()(0, 1), w1, 1e-12);
}

TEST(Decode, UnderdeterminedRidgeFitIsFinite) {
    Rng rng(4);
    const Dictionary d = sample_rbf_augmented(rng, 2, 6, true);
    std::vector<Vec> xs = {random_vector(rng, 2), random_vector(rng, 2)};
    const Decoder dec = fit_linear_decoder(d, xs, 1e-6);
    EXPECT_TRUE(dec.weights().allFinite());
}

TEST(Decode, IdentityFeaturesRecoverProjection) {
    Rng rng(5);
    const Dictionary d = Dictionary::identity_augmented(3, false);
    std::vector<Vec> xs;
    for (int i = 0; i < 20; ++i) xs.push_back(random_vector(rng, 3));
    const Decoder dec = fit_linear_decoder(d, xs, 0.0);
    EXPECT_LT((dec.weights() - Mat::Identity(3, 3)).norm(), 1e-12);
    for (const auto& x : xs) EXPECT_LT(round_trip_residual(d, dec, x), 1e-12);
}

TEST(Jacobian, IdentityDictionaryIsIdentity) {
    const Dictionary d = Dictionary::identity_augmented(4, false);
    Rng rng(6);
    EXPECT_EQ(lift_jacobian(d, random_vector(rng, 4)), Mat::Identity(4, 4));
}

TEST(Jacobian, GaussianPeakHasZeroGradient) {
    Mat c(1, 2);
    c << 0.1, 0.2;
    const Dictionary d = Dictionary::radial_basis(2, c, Vec::Ones(1));
    const Mat j = lift_jacobian(d, c.row(0).transpose());
    EXPECT_EQ(j.row(0).norm(), 0.0);
}

TEST(Jacobian, MatchesFiniteDifferencesForEveryKind) {
    Rng rng(8);
    const Dictionary ia = sample_rbf_augmented(rng, 4, 3, true);
    const Dictionary rb = Dictionary::radial_basis(3, random_matrix(rng, 5, 3), Vec::Constant(5, 0.8));
    const Dictionary te = Dictionary::trained_encoder(Mlp::random(3, 8, 5, 17));
    for (const Dictionary* d : {&ia, &rb, &te}) {
        for (int i = 0; i < 100; ++i) {
            const Vec x = random_vector(rng, d->input_dim());
            const Mat diff = lift_jacobian(*d, x) - fd_jacobian(*d, x, 1e-5);
            EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-4);
        }
    }
}

TEST(RoundTrip, ProjectionIsExact) {
    Rng rng(9);
    const Dictionary d = sample_rbf_augmented(rng, 3, 2, false);
    const Decoder p = Decoder::projection(d.latent_dim(), 3);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(round_trip_residual(d, p, random_vector(rng, 3)), 0.0);
}

TEST(RoundTrip, DirectNorm) {
    // decode(lift(x)) = (x0, 0.3) for x = (1, 0).
    const Dictionary d = Dictionary::identity_augmented(2, true);
    Mat w(2, 3);
    w << 1, 0, 0, 0, 0, 0.3;
    const Decoder dec = Decoder::linear(w);
    Vec x(2);
    x << 1.0, 0.0;
    EXPECT_NEAR(round_trip_residual(d, dec, x), 0.3, 1e-15);
}

TEST(RoundTrip, TrainedPairMatchesStraightLineEvaluation) {
    const Mlp enc = Mlp::random(2, 6, 4, 21);
    const Mlp dec = Mlp::random(4, 6, 2, 22);
    const Dictionary d = Dictionary::trained_encoder(enc);
    const Decoder psi = Decoder::trained(dec);
    Rng rng(10);
    for (int i = 0; i < 50; ++i) {
        const Vec x = random_vector(rng, 2);
        const Vec z = tanh_net(enc.w1, enc.b1, enc.w2, enc.b2, x);
        const Vec xr = tanh_net(dec.w1, dec.b1, dec.w2, dec.b2, z);
        EXPECT_NEAR(round_trip_residual(d, psi, x), (x - xr).norm(), 1e-12);
    }
}

TEST(Mlp, FlattenRoundTrip) {
    const Mlp m = Mlp::random(3, 5, 2, 4);
    const auto flat = m.flatten();
    EXPECT_EQ(flat.size(), m.parameter_count());
    const Mlp r = Mlp::unflatten(3, 5, 2, flat);
    EXPECT_EQ(r.w1, m.w1);
    EXPECT_EQ(r.b1, m.b1);
    EXPECT_EQ(r.w2, m.w2);
    EXPECT_EQ(r.b2, m.b2);
}

TEST(Dictionary, ParameterRoundTrip) {
    Rng rng(12);
    const Dictionary ia = sample_rbf_augmented(rng, 3, 2, true);
    const Dictionary rb = Dictionary::radial_basis(3, random_matrix(rng, 4, 3), Vec::Constant(4, 0.5));
    const Dictionary te = Dictionary::trained_encoder(Mlp::random(3, 4, 5, 3));
    for (const Dictionary* d : {&ia, &rb, &te}) {
        const auto p = d->parameters();
        const Dictionary r = Dictionary::from_parameters(d->kind(), d->input_dim(), d->latent_dim(), p);
        const Vec x = random_vector(rng, 3);
        EXPECT_EQ(lift(r, x), lift(*d, x));
    }
}

TEST(Dictionary, RbfCentersAndWidthFromStates) {
    Rng rng(13);
    std::vector<Vec> pts;
    for (int i = 0; i < 30; ++i) pts.push_back(random_vector(rng, 2));
    std::vector<double> dists;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) dists.push_back((pts[i] - pts[j]).norm());
    std::sort(dists.begin(), dists.end());
    const std::size_t n = dists.size();
    const double median = n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
    EXPECT_NEAR(median_pairwise_distance(pts), median, 1e-14);

    const Dictionary d = make_rbf_augmented_dictionary(pts, false, 3, 5);
    EXPECT_EQ(d.latent_dim(), 5);
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(d.rbf_widths()(i), d.rbf_widths()(0));
        EXPECT_GE(d.rbf_widths()(i), dists.front());
        EXPECT_LE(d.rbf_widths()(i), dists.back());
        const Vec c = d.rbf_centers().row(i).transpose();
        EXPECT_TRUE(std::any_of(pts.begin(), pts.end(), [&](const Vec& p) { return p == c; }));
    }
    const Dictionary again = make_rbf_augmented_dictionary(pts, false, 3, 5);
    EXPECT_EQ(again.rbf_centers(), d.rbf_centers());
    EXPECT_EQ(again.rbf_widths(), d.rbf_widths());
}
