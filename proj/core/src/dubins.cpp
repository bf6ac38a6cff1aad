#include "ckoop/dubins.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"

namespace ckoop {

Vec DubinsState::as_vector() const {
    Vec s(4);
    s << x, y, theta, v;
    return s;
}

DubinsState DubinsState::from_vector(const Vec& s) {
    if (s.size() != 4) throw InputError("DubinsState: expected 4 components");
    return {s(0), s(1), s(2), s(3)};
}

DubinsState dubins_step(const DubinsState& s, double accel, double omega, double dt) {
    return {s.x + s.v * dt * std::cos(s.theta), s.y + s.v * dt * std::sin(s.theta), s.theta + omega * dt,
            s.v + accel * dt};
}

Vec dubins_observation(const DubinsState& s) {
    Vec o(4);
    o << s.x, s.y, std::sin(s.theta), std::cos(s.theta);
    return o;
}

DubinsState dubins_state_from_observation(const Vec& obs, double speed) {
    if (obs.size() != 4) throw InputError("dubins observation must have 4 components");
    return {obs(0), obs(1), std::atan2(obs(2), obs(3)), speed};
}

double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(theta + std::numbers::pi, two_pi);
    if (w <= 0.0) w += two_pi;
    return w - std::numbers::pi;
}

double saturate_omega(double omega) { return std::clamp(omega, -kOmegaLimit, kOmegaLimit); }

void CollectionConfig::validate() const {
    if (episodes <= 0) throw InputError("episodes must be > 0");
    if (steps <= 0) throw InputError("steps must be > 0");
    if (!(dt > 0.0)) throw InputError("dt must be > 0");
    if (!(speed >= 0.0)) throw InputError("speed must be >= 0");
    if (hold_steps <= 0) throw InputError("hold_steps must be > 0");
    if (!(position_box >= 0.0)) throw InputError("position_box must be >= 0");
    if (input_dim != 1 && input_dim != 2) throw InputError("input_dim must be 1 or 2");
    if (!(accel_limit >= 0.0)) throw InputError("accel_limit must be >= 0");
}

TransitionDataset collect_episodes(const CollectionConfig& config, std::uint64_t seed) {
    config.validate();
    TransitionDataset data;
    data.source_seed = seed;
    data.records.reserve(static_cast<std::size_t>(config.episodes) * static_cast<std::size_t>(config.steps));
    for (int ep = 0; ep < config.episodes; ++ep) {
        Rng rng(mix_seed(seed, 1, static_cast<std::uint64_t>(ep)));
        DubinsState s;
        s.x = rng.uniform(-config.position_box, config.position_box);
        s.y = rng.uniform(-config.position_box, config.position_box);
        // (-pi, pi]
        s.theta = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
        s.v = config.speed;
        double omega = 0.0;
        double accel = 0.0;
        for (int k = 0; k < config.steps; ++k) {
            if (k % config.hold_steps == 0) {
                omega = rng.uniform(-kOmegaLimit, kOmegaLimit);
                if (config.input_dim == 2) accel = rng.uniform(-config.accel_limit, config.accel_limit);
            }
            const DubinsState next = dubins_step(s, accel, omega, config.dt);
            Transition t;
            t.episode = ep;
            t.k = k;
            t.x = dubins_observation(s);
            t.x_next = dubins_observation(next);
            if (config.input_dim == 1) {
                t.u = Vec::Constant(1, omega);
            } else {
                t.u.resize(2);
                t.u << accel, omega;
            }
            data.records.push_back(std::move(t));
            s = next;
        }
    }
    return data;
}

ReferenceTrajectory circle_reference(double radius, double speed, double dt, int steps, int input_dim) {
    if (!(radius > 0.0)) throw InputError("circle_reference: radius must be > 0");
    if (!(speed > 0.0)) throw InputError("circle_reference: speed must be > 0");
    if (!(dt > 0.0)) throw InputError("circle_reference: dt must be > 0");
    if (steps < 3) throw InputError("circle_reference: need at least 3 steps");
    if (input_dim != 1 && input_dim != 2) throw InputError("circle_reference: input_dim must be 1 or 2");
    ReferenceTrajectory ref;
    ref.dt = dt;
    ref.radius = radius;
    ref.speed = speed;
    std::vector<double> heading(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        const double phi = speed * dt * k / radius;
        heading[static_cast<std::size_t>(k)] = phi;
        Vec o(4);
        o << radius * std::sin(phi), radius * (1.0 - std::cos(phi)), std::sin(phi), std::cos(phi);
        ref.observations.push_back(std::move(o));
    }
    for (int k = 0; k < steps; ++k) {
        const auto i = static_cast<std::size_t>(k);
        double omega = 0.0;
        if (k == 0) omega = (heading[1] - heading[0]) / dt;
        else if (k == steps - 1) omega = (heading[i] - heading[i - 1]) / dt;
        else omega = (heading[i + 1] - heading[i - 1]) / (2.0 * dt);
        omega = saturate_omega(omega);
        if (input_dim == 1) {
            ref.inputs.push_back(Vec::Constant(1, omega));
        } else {
            Vec u(2);
            u << 0.0, omega;
            ref.inputs.push_back(std::move(u));
        }
    }
    return ref;
}

Plant dubins_plant(double dt) {
    Plant p;
    p.observe = [](const Vec& s) { return dubins_observation(DubinsState::from_vector(s)); };
    p.step = [dt](const Vec& s, const Vec& u) {
        const double accel = u.size() == 2 ? u(0) : 0.0;
        const double omega = u(u.size() - 1);
        return dubins_step(DubinsState::from_vector(s), accel, omega, dt).as_vector();
    };
    p.saturate = [](const Vec& u) {
        Vec out = u;
        out(out.size() - 1) = saturate_omega(out(out.size() - 1));
        return out;
    };
    return p;
}

int TrajectoryLog::saturated_steps() const noexcept {
    int n = 0;
    for (const auto& s : steps) n += s.saturated ? 1 : 0;
    return n;
}

TrajectoryLog rollout(const LiftedModel& model, const ControllerSpec& spec, const ReferenceTrajectory& ref,
                      ControllerKind kind, const Plant& plant, const Vec& initial_state, const BoundInputs& bounds,
                      std::uint64_t seed, const std::string& preset) {
    model.validate();
    if (spec.latent_dim() != model.latent_dim() || spec.input_dim() != model.input_dim()) {
        throw InputError("rollout: controller and model dimensions disagree");
    }
    if (ref.size() < 1 || ref.inputs.size() != ref.size()) throw InputError("rollout: malformed reference");
    if (ref.inputs.front().size() != model.input_dim()) throw InputError("rollout: reference input dimension mismatch");

    TrajectoryLog log;
    log.controller = kind;
    log.seed = seed;
    log.preset = preset;

    const double sq_m_under = std::sqrt(spec.m_under);
    const double sq_m_bar = std::sqrt(spec.m_bar);
    const double rho_eff = kind == ControllerKind::CRDR ? spec.rho : 0.0;
    const int horizon = static_cast<int>(ref.size());

    std::vector<Vec> ref_latent;
    ref_latent.reserve(ref.size());
    for (const auto& xd : ref.observations) ref_latent.push_back(lift(model.dictionary, xd));

    Vec state = initial_state;
    std::vector<double> slack_history;
    std::vector<double> eps;
    double v0 = 0.0;
    double dr = 0.0;

    for (int k = 0; k < horizon; ++k) {
        const auto i = static_cast<std::size_t>(k);
        StepRecord rec;
        rec.k = k;
        rec.state = state;
        rec.observation = plant.observe(state);
        rec.z = lift(model.dictionary, rec.observation);
        rec.e = rec.z - ref_latent[i];
        rec.lyapunov = (spec.theta * rec.e).norm();
        rec.e_norm = rec.e.norm();
        rec.pos_err = (rec.observation.head(2) - ref.observations[i].head(2)).norm();

        if (k == 0) {
            v0 = rec.lyapunov;
            dr = delta_r(kind, bounds.q_fwd, spec.gamma, spec.rho, spec.m_bar, spec.m_under);
            eps = latent_bound_profile(v0, spec.gamma, horizon - 1, dr, spec.m_under);
        }
        rec.eps_k = eps[i];
        rec.traj_bound = trajectory_bound(v0, spec.gamma, rho_eff, spec.m_bar, spec.m_under, bounds.q_traj,
                                          slack_history);
        rec.state_bound = state_bound(bounds.q_rt, bounds.lipschitz, rec.traj_bound);

        const Vec& u_d = ref.inputs[i];
        if (kind == ControllerKind::NFC) {
            rec.u_command = nfc_input(spec, u_d, rec.e);
        } else {
            const CrdrSolution sol = crdr_step(spec, model.a, model.b, rec.e, u_d);
            rec.u_command = sol.u;
            rec.delta_v = sol.delta_v;
            rec.constraint_gap = sol.constraint_gap;
        }
        rec.u_applied = plant.saturate(rec.u_command);
        rec.saturated = (rec.u_applied - rec.u_command).cwiseAbs().maxCoeff() > 0.0;
        slack_history.push_back(kind == ControllerKind::CRDR ? rec.delta_v : 0.0);

        const Vec next = plant.step(state, rec.u_applied);
        const bool finite = next.allFinite();
        if (finite && k + 1 < horizon) {
            const Vec obs_next = plant.observe(next);
            const Vec d_actual = lift(model.dictionary, obs_next) - (model.a * rec.z + model.b * rec.u_command);
            const Vec d_ref = ref_latent[i + 1] - (model.a * ref_latent[i] + model.b * u_d);
            rec.score_d = (d_actual - d_ref).norm();
            rec.score_crdr =
                sq_m_bar * rec.score_d + (kind == ControllerKind::CRDR ? rec.delta_v : 0.0);
        }
        log.steps.push_back(std::move(rec));
        if (!finite) {
            log.failed = true;
            log.failure = "non-finite state after step " + std::to_string(k);
            break;
        }
        state = next;
    }

    (void)sq_m_under;
    auto& md = log.metadata;
    md["controller"] = to_string(kind);
    md["seed"] = std::to_string(seed);
    md["preset"] = preset;
    md["failed"] = log.failed ? "true" : "false";
    md["saturated_steps"] = std::to_string(log.saturated_steps());
    md["steps"] = std::to_string(horizon);
    md["v0"] = format_double(v0);
    md["gamma"] = format_double(spec.gamma);
    md["rho"] = format_double(rho_eff);
    md["m_bar"] = format_double(spec.m_bar);
    md["m_under"] = format_double(spec.m_under);
    md["q_fwd"] = format_double(bounds.q_fwd);
    md["q_traj"] = format_double(bounds.q_traj);
    md["q_rt"] = format_double(bounds.q_rt);
    md["lipschitz"] = format_double(bounds.lipschitz);
    md["delta_r"] = format_double(dr);
    md["alpha"] = format_double(bounds.alpha);
    md["beta"] = format_double(bounds.beta);
    return log;
}

DubinsState perturbed_start(const ReferenceTrajectory& ref, std::uint64_t seed, double position_spread,
                            double heading_spread) {
    if (ref.size() == 0) throw InputError("perturbed_start: empty reference");
    Rng rng(seed);
    DubinsState s = dubins_state_from_observation(ref.observations.front(), ref.speed);
    s.x += rng.uniform(-position_spread, position_spread);
    s.y += rng.uniform(-position_spread, position_spread);
    s.theta += rng.uniform(-heading_spread, heading_spread);
    return s;
}

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out) {
    for (const auto& [k, v] : log.metadata) out << "# " << k << '=' << v << '\n';
    out << "k,x,y,theta,v,u,delta_v,e_norm,pos_err,eps_k,traj_bound,state_bound\n";
    for (const auto& r : log.steps) {
        const double ux = r.u_command.size() > 0 ? r.u_command(r.u_command.size() - 1) : 0.0;
        const auto st = [&](Eigen::Index i) { return i < r.state.size() ? r.state(i) : 0.0; };
        out << r.k << ',' << format_double(st(0)) << ',' << format_double(st(1)) << ','
            << format_double(wrap_angle(st(2))) << ',' << format_double(st(3)) << ',' << format_double(ux) << ','
            << (std::isnan(r.delta_v) ? std::string("NA") : format_double(r.delta_v)) << ','
            << format_double(r.e_norm) << ',' << format_double(r.pos_err) << ',' << format_double(r.eps_k) << ','
            << format_double(r.traj_bound) << ',' << format_double(r.state_bound) << '\n';
    }
}

TrajectoryLog read_trajectory_csv(std::istream& in) {
    const csv::Table t = csv::read(in);
    static const std::vector<std::string> expected = {"k",   "x",       "y",       "theta", "v",          "u",
                                                      "delta_v", "e_norm", "pos_err", "eps_k", "traj_bound",
                                                      "state_bound"};
    if (t.header != expected) throw InputError("trajectory log: unexpected header");
    TrajectoryLog log;
    log.metadata = t.metadata;
    if (auto it = t.metadata.find("controller"); it != t.metadata.end()) log.controller = parse_controller_kind(it->second);
    if (auto it = t.metadata.find("seed"); it != t.metadata.end()) log.seed = std::stoull(it->second);
    if (auto it = t.metadata.find("preset"); it != t.metadata.end()) log.preset = it->second;
    if (auto it = t.metadata.find("failed"); it != t.metadata.end()) log.failed = it->second == "true";
    for (const auto& row : t.rows) {
        StepRecord r;
        r.k = static_cast<int>(parse_int(row[0]));
        r.state.resize(4);
        for (int i = 0; i < 4; ++i) r.state(i) = parse_double(row[1 + static_cast<std::size_t>(i)]);
        r.u_command = Vec::Constant(1, parse_double(row[5]));
        r.delta_v = parse_double(row[6]);
        r.e_norm = parse_double(row[7]);
        r.pos_err = parse_double(row[8]);
        r.eps_k = parse_double(row[9]);
        r.traj_bound = parse_double(row[10]);
        r.state_bound = parse_double(row[11]);
        r.saturated = std::abs(r.u_command(0)) > kOmegaLimit;
        log.steps.push_back(std::move(r));
    }
    return log;
}

}  // namespace ckoop
