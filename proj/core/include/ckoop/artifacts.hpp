#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ckoop/controller.hpp"
#include "ckoop/koopman_id.hpp"

namespace ckoop {

// Ordered `key = value` text file. Values never contain newlines.
class KeyValueFile {
public:
    void set(std::string key, std::string value);
    void set_double(std::string key, double value);
    void set_matrix(std::string key, const Mat& m);
    void set_vector(std::string key, std::span<const double> v);

    [[nodiscard]] bool has(std::string_view key) const;
    [[nodiscard]] const std::string& get(std::string_view key) const;
    [[nodiscard]] double get_double(std::string_view key) const;
    [[nodiscard]] long long get_int(std::string_view key) const;
    [[nodiscard]] Mat get_matrix(std::string_view key) const;
    [[nodiscard]] std::vector<double> get_vector(std::string_view key) const;

    [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::string str() const;
    static KeyValueFile parse(std::string_view text, const std::string& source);
    static KeyValueFile load(const std::string& path);
    void save(const std::string& path) const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
    std::string source_;
};

struct FitDiagnostics {
    double rho_edmd = 0.0;
    double rho = 0.0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double prediction_loss_edmd = 0.0;
    double prediction_loss = 0.0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int iterations = 0;
};

void save_model(const LiftedModel& model, const FitDiagnostics& diag, const std::string& path);
[[nodiscard]] LiftedModel load_model(const std::string& path, FitDiagnostics* diag = nullptr);

struct ControllerFile {
    ControllerSpec spec;
    std::string preset;
    double lqr_state_weight = 1.0;
    std::vector<double> closed_loop_moduli;
};

void save_controller(const ControllerFile& controller, const std::string& path);
[[nodiscard]] ControllerFile load_controller(const std::string& path);

}  // namespace ckoop
