#include "ckoop/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"
#include "ckoop/numeric.hpp"

namespace ckoop {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class Member>
Field make_int(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return std::to_string(member(const_cast<ExperimentConfig&>(c))); },
            [member](ExperimentConfig& c, const std::string& v) {
                const long long x = parse_int(v);
                if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
                    throw InputError("integer out of range");
                }
                member(c) = static_cast<int>(x);
            }};
}

template <class Member>
Field make_double(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return format_double(member(const_cast<ExperimentConfig&>(c))); },
            [member](ExperimentConfig& c, const std::string& v) { member(c) = parse_double(v); }};
}

template <class Member>
Field make_bool(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) {
                return std::string(member(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
            },
            [member](ExperimentConfig& c, const std::string& v) {
                if (v == "true" || v == "1" || v == "yes") member(c) = true;
                else if (v == "false" || v == "0" || v == "no") member(c) = false;
                else throw InputError("expected true or false");
            }};
}

template <class Member>
Field make_string(std::string section, std::string key, Member member) {
    return {std::move(section), std::move(key),
            [member](const ExperimentConfig& c) { return member(const_cast<ExperimentConfig&>(c)); },
            [member](ExperimentConfig& c, const std::string& v) { member(c) = v; }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        using C = ExperimentConfig;
        f.push_back(make_string("experiment", "name", [](C& c) -> std::string& { return c.name; }));
        f.push_back(make_string("experiment", "preset", [](C& c) -> std::string& { return c.preset; }));
        f.push_back({"experiment", "seed", [](const C& c) { return std::to_string(c.seed); },
                     [](C& c, const std::string& v) {
                         if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
                             throw InputError("expected a non-negative integer");
                         }
                         c.seed = std::stoull(v);
                     }});

        f.push_back(make_int("data", "episodes", [](C& c) -> int& { return c.data.episodes; }));
        f.push_back(make_int("data", "ident_episodes", [](C& c) -> int& { return c.data.ident_episodes; }));
        f.push_back(make_int("data", "steps", [](C& c) -> int& { return c.data.steps; }));
        f.push_back(make_double("data", "dt", [](C& c) -> double& { return c.data.dt; }));
        f.push_back(make_double("data", "speed", [](C& c) -> double& { return c.data.speed; }));
        f.push_back(make_int("data", "hold_steps", [](C& c) -> int& { return c.data.hold_steps; }));
        f.push_back(make_double("data", "position_box", [](C& c) -> double& { return c.data.position_box; }));

        f.push_back({"lifting", "dictionary", [](const C& c) { return to_string(c.lifting.dictionary); },
                     [](C& c, const std::string& v) { c.lifting.dictionary = parse_dictionary_kind(v); }});
        f.push_back(make_bool("lifting", "constant", [](C& c) -> bool& { return c.lifting.constant; }));
        f.push_back(make_int("lifting", "rbf_count", [](C& c) -> int& { return c.lifting.rbf_count; }));
        f.push_back({"lifting", "decoder", [](const C& c) { return to_string(c.lifting.decoder); },
                     [](C& c, const std::string& v) { c.lifting.decoder = parse_decoder_kind(v); }});
        f.push_back(make_double("lifting", "decoder_ridge", [](C& c) -> double& { return c.lifting.decoder_ridge; }));
        f.push_back(make_int("lifting", "hidden", [](C& c) -> int& { return c.lifting.hidden; }));
        f.push_back(make_int("lifting", "train_iters", [](C& c) -> int& { return c.lifting.train_iters; }));
        f.push_back(make_int("lifting", "train_batch", [](C& c) -> int& { return c.lifting.train_batch; }));
        f.push_back(make_double("lifting", "train_step", [](C& c) -> double& { return c.lifting.train_step; }));
        f.push_back(make_double("lifting", "recon_weight", [](C& c) -> double& { return c.lifting.recon_weight; }));
        f.push_back(make_double("lifting", "ctrl_weight", [](C& c) -> double& { return c.lifting.ctrl_weight; }));

        f.push_back(make_double("identification", "w_rho", [](C& c) -> double& { return c.identification.w_rho; }));
        f.push_back(make_double("identification", "w_ctrl", [](C& c) -> double& { return c.identification.w_ctrl; }));
        f.push_back(make_double("identification", "lambda_cond",
                                [](C& c) -> double& { return c.identification.lambda_cond; }));
        f.push_back(make_double("identification", "epsilon_ctrl",
                                [](C& c) -> double& { return c.identification.epsilon_ctrl; }));
        f.push_back(make_double("identification", "ridge", [](C& c) -> double& { return c.identification.ridge; }));
        f.push_back(make_int("identification", "max_iters", [](C& c) -> int& { return c.identification.max_iters; }));
        f.push_back(make_double("identification", "step_size",
                                [](C& c) -> double& { return c.identification.step_size; }));
        f.push_back(make_double("identification", "tol", [](C& c) -> double& { return c.identification.tol; }));
        f.push_back(make_double("identification", "rho_window",
                                [](C& c) -> double& { return c.identification.rho_window; }));

        f.push_back(make_string("controller", "preset", [](C& c) -> std::string& { return c.controller.preset; }));
        f.push_back(make_double("controller", "gamma", [](C& c) -> double& { return c.controller.gamma; }));
        f.push_back(make_double("controller", "rho", [](C& c) -> double& { return c.controller.rho; }));
        f.push_back(make_double("controller", "c_v", [](C& c) -> double& { return c.controller.c_v; }));
        f.push_back(make_double("controller", "lyapunov_weight",
                                [](C& c) -> double& { return c.controller.lyapunov_weight; }));
        f.push_back(make_double("controller", "lqr_state_weight",
                                [](C& c) -> double& { return c.controller.lqr_state_weight; }));
        f.push_back(make_double("controller", "lqr_input_weight",
                                [](C& c) -> double& { return c.controller.lqr_input_weight; }));
        f.push_back(make_double("controller", "controllability_floor",
                                [](C& c) -> double& { return c.controller.controllability_floor; }));

        f.push_back(make_double("conformal", "alpha", [](C& c) -> double& { return c.conformal.alpha; }));
        f.push_back(make_double("conformal", "beta", [](C& c) -> double& { return c.conformal.beta; }));
        f.push_back(make_int("conformal", "horizon", [](C& c) -> int& { return c.conformal.horizon; }));
        f.push_back(make_int("conformal", "calibration_runs", [](C& c) -> int& { return c.conformal.calibration_runs; }));
        f.push_back(make_int("conformal", "test_runs", [](C& c) -> int& { return c.conformal.test_runs; }));
        f.push_back({"conformal", "score_kinds",
                     [](const C& c) {
                         std::vector<std::string> names;
                         for (auto k : c.conformal.score_kinds) names.push_back(to_string(k));
                         return csv::join(names);
                     },
                     [](C& c, const std::string& v) {
                         c.conformal.score_kinds.clear();
                         for (const auto& item : csv::split(v)) {
                             c.conformal.score_kinds.push_back(parse_score_kind(trim(item)));
                         }
                     }});
        f.push_back(make_double("conformal", "lipschitz_safety",
                                [](C& c) -> double& { return c.conformal.lipschitz_safety; }));
        f.push_back(make_int("conformal", "contraction_samples",
                             [](C& c) -> int& { return c.conformal.contraction_samples; }));

        f.push_back({"rollout", "controllers",
                     [](const C& c) {
                         std::vector<std::string> names;
                         for (auto k : c.rollout.controllers) names.push_back(to_string(k));
                         return csv::join(names);
                     },
                     [](C& c, const std::string& v) {
                         c.rollout.controllers.clear();
                         for (const auto& item : csv::split(v)) {
                             c.rollout.controllers.push_back(parse_controller_kind(trim(item)));
                         }
                     }});
        f.push_back(make_int("rollout", "steps", [](C& c) -> int& { return c.rollout.steps; }));
        f.push_back(make_int("rollout", "seeds", [](C& c) -> int& { return c.rollout.seeds; }));
        f.push_back(make_double("rollout", "radius", [](C& c) -> double& { return c.rollout.radius; }));
        f.push_back(make_double("rollout", "position_spread",
                                [](C& c) -> double& { return c.rollout.position_spread; }));
        f.push_back(make_double("rollout", "heading_spread",
                                [](C& c) -> double& { return c.rollout.heading_spread; }));

        f.push_back(make_string("report", "output_dir", [](C& c) -> std::string& { return c.report.output_dir; }));
        f.push_back(make_bool("report", "plots", [](C& c) -> bool& { return c.report.plots; }));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields()) {
        if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid configuration: " + what);
}

}  // namespace

void ExperimentConfig::validate() const {
    require(!name.empty(), "experiment.name must not be empty");
    require(data.episodes > 0, "data.episodes must be > 0");
    require(data.ident_episodes > 0, "data.ident_episodes must be > 0");
    require(data.steps > 0, "data.steps must be > 0");
    require(std::isfinite(data.dt) && data.dt > 0, "data.dt must be > 0");
    require(std::isfinite(data.speed) && data.speed > 0, "data.speed must be > 0");
    require(data.hold_steps > 0, "data.hold_steps must be > 0");
    require(std::isfinite(data.position_box) && data.position_box >= 0, "data.position_box must be >= 0");

    require(lifting.rbf_count >= 0, "lifting.rbf_count must be >= 0");
    require(std::isfinite(lifting.decoder_ridge) && lifting.decoder_ridge >= 0, "lifting.decoder_ridge must be >= 0");
    if (lifting.dictionary == DictionaryKind::RadialBasis) {
        require(lifting.rbf_count > 0, "lifting.rbf_count must be > 0 for radial_basis");
        require(lifting.decoder != DecoderKind::Projection, "lifting.decoder=projection needs identity_augmented");
    }
    if (lifting.dictionary == DictionaryKind::TrainedEncoder) {
        require(lifting.decoder != DecoderKind::Projection, "lifting.decoder=projection needs identity_augmented");
        require(lifting.hidden > 0 && lifting.hidden <= 32, "lifting.hidden must lie in [1,32]");
        require(lifting.train_iters >= 0, "lifting.train_iters must be >= 0");
        require(lifting.train_batch > 0, "lifting.train_batch must be > 0");
        require(std::isfinite(lifting.train_step) && lifting.train_step > 0, "lifting.train_step must be > 0");
        require(std::isfinite(lifting.recon_weight) && lifting.recon_weight >= 0, "lifting.recon_weight must be >= 0");
        require(std::isfinite(lifting.ctrl_weight) && lifting.ctrl_weight >= 0, "lifting.ctrl_weight must be >= 0");
    } else if (lifting.decoder == DecoderKind::TrainedDecoder) {
        require(false, "lifting.decoder=trained needs dictionary=trained_encoder");
    }

    try {
        identification.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid configuration: identification: ") + e.what());
    }

    require(!controller.preset.empty(), "controller.preset must not be empty");
    require(std::isfinite(controller.gamma) && controller.gamma > 0 && controller.gamma < 1,
            "controller.gamma must lie in (0,1)");
    require(std::isfinite(controller.rho) && controller.rho >= 0, "controller.rho must be >= 0");
    require(std::isfinite(controller.c_v) && controller.c_v > 0, "controller.c_v must be > 0");
    require(std::isfinite(controller.lyapunov_weight) && controller.lyapunov_weight > 0,
            "controller.lyapunov_weight must be > 0");
    require(std::isfinite(controller.lqr_state_weight) && controller.lqr_state_weight > 0,
            "controller.lqr_state_weight must be > 0");
    require(std::isfinite(controller.lqr_input_weight) && controller.lqr_input_weight > 0,
            "controller.lqr_input_weight must be > 0");
    require(std::isfinite(controller.controllability_floor) && controller.controllability_floor >= 0,
            "controller.controllability_floor must be >= 0");

    require(std::isfinite(conformal.alpha) && conformal.alpha > 0 && conformal.alpha < 1,
            "conformal.alpha must lie in (0,1)");
    require(std::isfinite(conformal.beta) && conformal.beta > 0 && conformal.beta < 1,
            "conformal.beta must lie in (0,1)");
    require(conformal.alpha + conformal.beta < 1, "conformal.alpha + conformal.beta must be < 1");
    require(conformal.horizon >= 1, "conformal.horizon must be >= 1");
    require(conformal.calibration_runs > 0, "conformal.calibration_runs must be > 0");
    require(conformal.test_runs > 0, "conformal.test_runs must be > 0");
    require(!conformal.score_kinds.empty(), "conformal.score_kinds must not be empty");
    require(std::isfinite(conformal.lipschitz_safety) && conformal.lipschitz_safety >= 1,
            "conformal.lipschitz_safety must be >= 1");
    require(conformal.contraction_samples >= 0, "conformal.contraction_samples must be >= 0");

    require(!rollout.controllers.empty(), "rollout.controllers must not be empty");
    require(rollout.steps >= 3, "rollout.steps must be >= 3");
    require(rollout.seeds > 0, "rollout.seeds must be > 0");
    require(std::isfinite(rollout.radius) && rollout.radius > 0, "rollout.radius must be > 0");
    require(std::isfinite(rollout.position_spread) && rollout.position_spread >= 0,
            "rollout.position_spread must be >= 0");
    require(std::isfinite(rollout.heading_spread) && rollout.heading_spread >= 0,
            "rollout.heading_spread must be >= 0");
    require(conformal.horizon == rollout.steps - 1, "conformal.horizon must equal rollout.steps - 1");

    require(!report.output_dir.empty(), "report.output_dir must not be empty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

std::vector<std::string> preset_names() { return {"dubins-paper", "flapper-doc"}; }

ExperimentConfig preset_config(std::string_view name) {
    ExperimentConfig c;
    c.identification.w_rho = 10.0;
    c.identification.w_ctrl = 0.0;
    if (name == "dubins-paper") return c;
    if (name == "flapper-doc") {
        // Documentation only: flapper controller parameters on the Dubins plant.
        const auto p = flapper_preset();
        c.name = "flapper-doc";
        c.preset = "flapper-doc";
        c.controller.preset = p.name;
        c.controller.gamma = p.params.gamma;
        c.controller.rho = p.params.rho;
        c.controller.c_v = p.params.c_v;
        return c;
    }
    throw ConfigError("unknown preset '" + std::string(name) + "' (known: dubins-paper, flapper-doc)");
}

std::string find_preset(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::string section;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (section == "experiment" && eq != std::string::npos && trim(t.substr(0, eq)) == "preset") {
            return trim(t.substr(eq + 1));
        }
    }
    return {};
}

ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base, const std::string& source) {
    ExperimentConfig c = base;
    std::istringstream in{std::string(text)};
    std::string line;
    std::string section;
    std::set<std::string> seen;
    int lineno = 0;
    const auto fail = [&](const std::string& what) {
        throw ConfigError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail("malformed section header '" + t + "'");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            bool known = false;
            for (const auto& f : fields()) known = known || f.section == section;
            if (!known) fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) fail("expected key = value, got '" + t + "'");
        if (section.empty()) fail("key outside of any section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const Field* f = find_field(section, key);
        if (f == nullptr) fail("unknown key '" + key + "' in section [" + section + "]");
        if (!seen.insert(section + "." + key).second) fail("duplicate key '" + section + "." + key + "'");
        try {
            f->set(c, value);
        } catch (const Error& e) {
            fail("bad value for " + section + "." + key + " ('" + value + "'): " + e.what());
        } catch (const std::exception& e) {
            fail("bad value for " + section + "." + key + " ('" + value + "')");
        }
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return c;
}

ExperimentConfig load_config_file(const std::string& path, const std::string& preset_override) {
    const std::string text = csv::read_text_file(path);
    std::string preset = preset_override;
    if (preset.empty()) preset = find_preset(text);
    if (preset.empty()) preset = "dubins-paper";
    return parse_config(text, preset_config(preset), path);
}

std::string serialize_config(const ExperimentConfig& config) {
    std::ostringstream out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        out << f.key << " = " << f.get(config) << '\n';
    }
    return out.str();
}

}  // namespace ckoop
