#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <iosfwd>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "ckoop/conformal.hpp"
#include "ckoop/controller.hpp"
#include "ckoop/koopman_id.hpp"

namespace ckoop {

inline constexpr double kOmegaLimit = std::numbers::pi;

struct DubinsState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
    double v = 1.0;

    [[nodiscard]] Vec as_vector() const;
    static DubinsState from_vector(const Vec& s);
};

// Explicit Euler step of the unicycle with speed state:
//   x' = x + v dt cos(theta), y' = y + v dt sin(theta),
//   theta' = theta + omega dt, v' = v + a dt
[[nodiscard]] DubinsState dubins_step(const DubinsState& s, double accel, double omega, double dt);

// (x, y, sin(theta), cos(theta))
[[nodiscard]] Vec dubins_observation(const DubinsState& s);
[[nodiscard]] DubinsState dubins_state_from_observation(const Vec& obs, double speed);

[[nodiscard]] double wrap_angle(double theta);
[[nodiscard]] double saturate_omega(double omega);

struct CollectionConfig {
    int episodes = 1000;
    int steps = 100;
    double dt = 0.1;
    double speed = 1.0;
    int hold_steps = 10;
    double position_box = 1.0;
    // 1: u = (omega); 2: u = (a, omega) with a ~ U[-accel_limit, accel_limit].
    int input_dim = 1;
    double accel_limit = 0.0;

    void validate() const;
};

// Random initial pose in [-box, box]^2 x (-pi, pi], constant speed, omega
// redrawn from U[-pi, pi] every hold_steps steps. Pure function of its inputs.
[[nodiscard]] TransitionDataset collect_episodes(const CollectionConfig& config, std::uint64_t seed);

struct ReferenceTrajectory {
    std::vector<Vec> observations;  // (x_ref, y_ref, sin, cos)
    std::vector<Vec> inputs;        // (omega) or (a, omega)
    double dt = 0.1;
    double radius = 0.5;
    double speed = 1.0;

    [[nodiscard]] std::size_t size() const noexcept { return observations.size(); }
};

// Circle of radius r centered at (0, r), starting at the origin heading +x,
// counter-clockwise at speed v_d. omega by central differences of the heading
// (one-sided at the ends), clipped to [-pi, pi].
[[nodiscard]] ReferenceTrajectory circle_reference(double radius, double speed, double dt, int steps,
                                                   int input_dim = 1);

// Generic plant used by rollout: internal state, observation, saturation.
struct Plant {
    std::function<Vec(const Vec& state)> observe;
    std::function<Vec(const Vec& state, const Vec& u)> step;
    std::function<Vec(const Vec& u)> saturate;
};

[[nodiscard]] Plant dubins_plant(double dt);

// Inputs to the live bound evaluation along a rollout.
struct BoundInputs {
    double q_fwd = std::numeric_limits<double>::infinity();   // forward-score quantile for this controller
    double q_traj = std::numeric_limits<double>::infinity();  // |d_hat| quantile for the history bound
    double q_rt = 0.0;
    double lipschitz = 1.0;
    double alpha = 0.1;
    double beta = 0.0;
};

struct StepRecord {
    int k = 0;
    Vec state;
    Vec observation;
    Vec z;
    Vec e;
    Vec u_command;
    Vec u_applied;
    bool saturated = false;
    double delta_v = std::numeric_limits<double>::quiet_NaN();  // NaN for NFC
    double constraint_gap = std::numeric_limits<double>::quiet_NaN();
    double lyapunov = 0.0;  // |theta e|
    double e_norm = 0.0;
    double pos_err = 0.0;
    double eps_k = 0.0;
    double traj_bound = 0.0;
    double state_bound = 0.0;
    // |d_hat_k| and sqrt(m_bar)|d_hat_k| + dv_k, NaN on the last step.
    double score_d = std::numeric_limits<double>::quiet_NaN();
    double score_crdr = std::numeric_limits<double>::quiet_NaN();
};

struct TrajectoryLog {
    std::vector<StepRecord> steps;
    ControllerKind controller = ControllerKind::CRDR;
    std::uint64_t seed = 0;
    std::string preset;
    bool failed = false;
    std::string failure;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] int saturated_steps() const noexcept;
};

// Closed loop on the plant: lift the observation, e = g(x) - g(x_d), NFC or
// CRDR input, saturation, plant step. Residual scores use the commanded input,
// so saturation counts as part of the unknown dynamics. Non-finite states
// abort the rollout with failed = true and a partial log.
[[nodiscard]] TrajectoryLog rollout(const LiftedModel& model, const ControllerSpec& spec,
                                    const ReferenceTrajectory& ref, ControllerKind kind, const Plant& plant,
                                    const Vec& initial_state, const BoundInputs& bounds, std::uint64_t seed = 0,
                                    const std::string& preset = {});

// Reference start pose perturbed uniformly by +-position_spread and
// +-heading_spread, at the reference speed.
[[nodiscard]] DubinsState perturbed_start(const ReferenceTrajectory& ref, std::uint64_t seed, double position_spread,
                                          double heading_spread);

// CSV k,x,y,theta,v,u,delta_v,e_norm,pos_err,eps_k,traj_bound,state_bound with
// `# key=value` metadata. delta_v is written as NA for NFC.
void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out);
[[nodiscard]] TrajectoryLog read_trajectory_csv(std::istream& in);

}  // namespace ckoop
