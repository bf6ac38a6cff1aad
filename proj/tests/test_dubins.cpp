#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include <ckoop/controller.hpp>
#include <ckoop/dubins.hpp>
#include <ckoop/errors.hpp>

#include "test_support.hpp"

using namespace ckoop;
using test::random_matrix;
using test::random_vector;

namespace {

constexpr double kPi = std::numbers::pi;

struct LinearToy {
    LiftedModel model;
    ControllerSpec spec;
    Plant plant;
    ReferenceTrajectory ref;
};

LinearToy make_linear_toy(std::uint64_t seed, int steps) {
    Rng rng(seed);
    LinearToy t;
    const int n = 3;
    Mat a = random_matrix(rng, n, n);
    a *= 0.95 / spectral_radius(a);
    const Mat b = random_matrix(rng, n, 1);
    t.model.dictionary = Dictionary::identity_augmented(n, false);
    t.model.decoder = Decoder::projection(n, n);
    t.model.a = a;
    t.model.b = b;
    SynthesisResult syn = synthesize_metric(a, b, 0.9, Mat::Identity(n, n));
    t.spec = syn.spec;
    t.spec.rho = 0.01;
    t.spec.c_v = 0.5;
    t.plant.observe = [](const Vec& s) { return s; };
    t.plant.step = [a, b](const Vec& s, const Vec& u) -> Vec { return a * s + b * u; };
    t.plant.saturate = [](const Vec& u) { return u; };
    Vec x = random_vector(rng, n);
    for (int k = 0; k < steps; ++k) {
        const Vec u = Vec::Constant(1, std::sin(0.3 * k));
        t.ref.observations.push_back(x);
        t.ref.inputs.push_back(u);
        x = a * x + b * u;
    }
    return t;
}

}  // namespace

TEST(DubinsStep, Examples) {
    const DubinsState s1 = dubins_step({0, 0, 0, 1}, 0, 0, 0.1);
    EXPECT_NEAR(s1.x, 0.1, 1e-15);
    EXPECT_NEAR(s1.y, 0.0, 1e-15);
    EXPECT_EQ(s1.theta, 0.0);
    EXPECT_EQ(s1.v, 1.0);

    const DubinsState s2 = dubins_step({0, 0, kPi / 2, 1}, 0, 0, 0.1);
    EXPECT_NEAR(s2.x, 0.0, 1e-15);
    EXPECT_NEAR(s2.y, 0.1, 1e-15);
    EXPECT_NEAR(s2.theta, kPi / 2, 1e-15);

    const DubinsState s3 = dubins_step({0, 0, 0, 1}, 2.0, 1.0, 0.1);
    EXPECT_NEAR(s3.theta, 0.1, 1e-15);
    EXPECT_NEAR(s3.v, 1.2, 1e-15);
}

TEST(DubinsStep, ObservationRoundTrip) {
    const DubinsState s{0.3, -0.2, 2.5, 1.0};
    const DubinsState r = dubins_state_from_observation(dubins_observation(s), 1.0);
    EXPECT_NEAR(r.x, s.x, 1e-15);
    EXPECT_NEAR(r.y, s.y, 1e-15);
    EXPECT_NEAR(r.theta, s.theta, 1e-14);
    EXPECT_NEAR(wrap_angle(3 * kPi), kPi, 1e-12);
}

TEST(Saturation, Clamps) {
    EXPECT_EQ(saturate_omega(0.5), 0.5);
    EXPECT_EQ(saturate_omega(10.0), kPi);
    EXPECT_EQ(saturate_omega(-10.0), -kPi);
}

TEST(Collect, SingleRecord) {
    CollectionConfig c;
    c.episodes = 1;
    c.steps = 1;
    const auto d = collect_episodes(c, 5);
    EXPECT_EQ(d.records.size(), 1u);
}

TEST(Collect, DeterministicBytes) {
    CollectionConfig c;
    c.episodes = 3;
    c.steps = 20;
    std::stringstream a;
    std::stringstream b;
    write_dataset_csv(collect_episodes(c, 77), a);
    write_dataset_csv(collect_episodes(c, 77), b);
    EXPECT_EQ(a.str(), b.str());
    std::stringstream other;
    write_dataset_csv(collect_episodes(c, 78), other);
    EXPECT_NE(a.str(), other.str());
}

TEST(Collect, ProtocolProperties) {
    CollectionConfig c;
    c.episodes = 10;
    c.steps = 30;
    const auto d = collect_episodes(c, 3);
    ASSERT_EQ(d.records.size(), 300u);
    d.validate();
    for (const auto& r : d.records) {
        EXPECT_EQ(r.x.size(), 4);
        EXPECT_LE(std::abs(r.u(0)), kPi);
        EXPECT_NEAR(r.x(2) * r.x(2) + r.x(3) * r.x(3), 1.0, 1e-12);
        if (r.k == 0) {
            EXPECT_LE(std::abs(r.x(0)), 1.0);
            EXPECT_LE(std::abs(r.x(1)), 1.0);
        }
        if (r.k % c.hold_steps != 0) {
            const auto& prev = d.records[&r - d.records.data() - 1];
            EXPECT_EQ(prev.u(0), r.u(0));
        }
    }
}

TEST(Collect, PaperScaleCounts) {
    CollectionConfig c;
    EXPECT_EQ(c.episodes * c.steps, 100000);
}

TEST(Collect, InvalidConfigRejected) {
    CollectionConfig c;
    c.episodes = 0;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(Reference, CircleProperties) {
    const auto ref = circle_reference(0.5, 1.0, 0.1, 50);
    ASSERT_EQ(ref.size(), 50u);
    EXPECT_NEAR(ref.observations[0](0), 0.0, 1e-15);
    EXPECT_NEAR(ref.observations[0](1), 0.0, 1e-15);
    EXPECT_EQ(ref.radius, 0.5);
    for (std::size_t k = 1; k + 1 < ref.size(); ++k) EXPECT_NEAR(ref.inputs[k](0), 1.0 / 0.5, 1e-6);
    for (const auto& o : ref.observations) {
        const double dx = o(0);
        const double dy = o(1) - 0.5;
        EXPECT_NEAR(std::hypot(dx, dy), 0.5, 1e-12);
    }
    EXPECT_THROW((void)circle_reference(0.5, 1.0, 0.1, 2), InputError);
}

TEST(Reference, OmegaIsClipped) {
    const auto ref = circle_reference(0.1, 1.0, 0.1, 20);
    for (const auto& u : ref.inputs) EXPECT_LE(std::abs(u(0)), kPi);
}

TEST(Rollout, ExactModelOnReferenceHasZeroError) {
    auto toy = make_linear_toy(1, 30);
    BoundInputs bi;
    bi.q_fwd = 0.0;
    bi.q_traj = 0.0;
    for (auto kind : {ControllerKind::NFC, ControllerKind::CRDR}) {
        const TrajectoryLog log = rollout(toy.model, toy.spec, toy.ref, kind, toy.plant, toy.ref.observations[0], bi);
        ASSERT_FALSE(log.failed);
        ASSERT_EQ(log.steps.size(), toy.ref.size());
        for (std::size_t k = 0; k < log.steps.size(); ++k) {
            EXPECT_LT(log.steps[k].e_norm, 1e-12);
            EXPECT_LT((log.steps[k].u_applied - toy.ref.inputs[k]).norm(), 1e-12);
        }
    }
}

TEST(Rollout, TrajectoryBoundRecomputedFromLog) {
    auto toy = make_linear_toy(2, 40);
    BoundInputs bi;
    bi.q_fwd = 0.05;
    bi.q_traj = 0.02;
    bi.q_rt = 0.0;
    Vec start = toy.ref.observations[0] + Vec::Constant(3, 0.5);
    const TrajectoryLog live =
        rollout(toy.model, toy.spec, toy.ref, ControllerKind::CRDR, toy.plant, start, bi, 9, "toy");
    std::stringstream ss;
    write_trajectory_csv(live, ss);
    const TrajectoryLog log = read_trajectory_csv(ss);
    ASSERT_EQ(log.steps.size(), live.steps.size());
    const auto md = [&](const char* k) { return parse_double(log.metadata.at(k)); };
    std::vector<double> history;
    bool any_slack = false;
    for (const auto& s : log.steps) {
        const double offline = trajectory_bound(md("v0"), md("gamma"), md("rho"), md("m_bar"), md("m_under"),
                                                md("q_traj"), history);
        EXPECT_NEAR(offline, s.traj_bound, 1e-10);
        history.push_back(s.delta_v);
        any_slack = any_slack || s.delta_v > 0;
    }
    EXPECT_TRUE(any_slack);
}

TEST(Rollout, NfcLogsHaveNoSlack) {
    auto toy = make_linear_toy(3, 10);
    BoundInputs bi;
    bi.q_fwd = 0.1;
    bi.q_traj = 0.1;
    const TrajectoryLog live = rollout(toy.model, toy.spec, toy.ref, ControllerKind::NFC, toy.plant,
                                       toy.ref.observations[0] + Vec::Constant(3, 0.1), bi);
    std::stringstream ss;
    write_trajectory_csv(live, ss);
    EXPECT_NE(ss.str().find(",NA,"), std::string::npos);
    const TrajectoryLog back = read_trajectory_csv(ss);
    EXPECT_EQ(back.controller, ControllerKind::NFC);
    for (const auto& s : back.steps) EXPECT_TRUE(std::isnan(s.delta_v));
}

TEST(Rollout, DivergenceMarksFailure) {
    auto toy = make_linear_toy(4, 10);
    toy.plant.step = [](const Vec& s, const Vec&) -> Vec { return s * 1e300; };
    BoundInputs bi;
    const TrajectoryLog log = rollout(toy.model, toy.spec, toy.ref, ControllerKind::NFC, toy.plant,
                                      toy.ref.observations[0] + Vec::Constant(3, 1.0), bi);
    EXPECT_TRUE(log.failed);
    EXPECT_LT(log.steps.size(), toy.ref.size());
}

TEST(Rollout, PerturbedStartWithinSpread) {
    const auto ref = circle_reference(0.5, 1.0, 0.1, 10);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const DubinsState p = perturbed_start(ref, s, 0.1, 0.2);
        EXPECT_LE(std::abs(p.x), 0.1);
        EXPECT_LE(std::abs(p.y), 0.1);
        EXPECT_LE(std::abs(p.theta), 0.2);
        EXPECT_EQ(p.v, 1.0);
    }
    EXPECT_EQ(perturbed_start(ref, 3, 0.1, 0.2).x, perturbed_start(ref, 3, 0.1, 0.2).x);
}
