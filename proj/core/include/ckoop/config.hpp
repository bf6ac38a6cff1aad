#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ckoop/conformal.hpp"
#include "ckoop/dubins.hpp"
#include "ckoop/koopman_id.hpp"
#include "ckoop/lifting.hpp"

namespace ckoop {

struct DataSection {
    int episodes = 1000;
    int ident_episodes = 100;
    int steps = 100;
    double dt = 0.1;
    double speed = 1.0;
    int hold_steps = 10;
    double position_box = 1.0;
};

struct LiftingSection {
    DictionaryKind dictionary = DictionaryKind::IdentityAugmented;
    bool constant = false;
    int rbf_count = 2;
    DecoderKind decoder = DecoderKind::Projection;
    double decoder_ridge = 0.0;
    // trained_encoder only
    int hidden = 16;
    int train_iters = 200;
    int train_batch = 256;
    double train_step = 0.05;
    double recon_weight = 0.1;
    double ctrl_weight = 0.1;
};

struct ControllerSection {
    std::string preset = "dubins";
    double gamma = 0.9;
    double rho = 0.073;
    double c_v = 0.01;
    double lyapunov_weight = 1.0;  // Q = weight * I in the metric equation
    double lqr_state_weight = 1e4;
    double lqr_input_weight = 1.0;
    double controllability_floor = 0.0;
};

struct ConformalSection {
    double alpha = 0.1;
    double beta = 0.05;
    int horizon = 49;
    int calibration_runs = 200;
    int test_runs = 100;
    std::vector<ScoreKind> score_kinds = {ScoreKind::ForwardNFC, ScoreKind::ForwardCRDR, ScoreKind::RoundTrip};
    double lipschitz_safety = 1.5;
    int contraction_samples = 500;
};

struct RolloutSection {
    std::vector<ControllerKind> controllers = {ControllerKind::NFC, ControllerKind::CRDR};
    int steps = 50;
    int seeds = 20;
    double radius = 0.5;
    double position_spread = 0.1;
    double heading_spread = 0.1;
};

struct ReportSection {
    std::string output_dir = "out";
    bool plots = true;
};

struct ExperimentConfig {
    std::string name = "dubins-paper";
    std::string preset = "dubins-paper";
    std::uint64_t seed = 20240601;
    DataSection data;
    LiftingSection lifting;
    IdentificationConfig identification;
    ControllerSection controller;
    ConformalSection conformal;
    RolloutSection rollout;
    ReportSection report;

    // Throws ConfigError naming the offending section.key.
    void validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

[[nodiscard]] std::vector<std::string> preset_names();
// Throws ConfigError for unknown names.
[[nodiscard]] ExperimentConfig preset_config(std::string_view name);

// Sectioned key = value text. `source` labels error messages (file:line).
// Keys not present keep the value already in `base`.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text, const ExperimentConfig& base,
                                            const std::string& source = "<config>");
// Value of [experiment] preset in the text, if any.
[[nodiscard]] std::string find_preset(std::string_view text);
[[nodiscard]] ExperimentConfig load_config_file(const std::string& path, const std::string& preset_override = {});
[[nodiscard]] std::string serialize_config(const ExperimentConfig& config);

}  // namespace ckoop
