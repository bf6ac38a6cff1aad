#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ckoop/lifting.hpp"
#include "ckoop/numeric.hpp"

namespace ckoop {

struct Transition {
    int episode = 0;
    int k = 0;
    Vec x;
    Vec u;
    Vec x_next;
};

// Observation-space transitions (x_k, u_k, x_{k+1}) grouped by episode.
struct TransitionDataset {
    std::vector<Transition> records;
    std::uint64_t source_seed = 0;

    [[nodiscard]] int state_dim() const noexcept { return records.empty() ? 0 : static_cast<int>(records.front().x.size()); }
    [[nodiscard]] int input_dim() const noexcept { return records.empty() ? 0 : static_cast<int>(records.front().u.size()); }
    [[nodiscard]] std::vector<Vec> states() const;
    // Checks shared dimensions and within-episode chaining (x_next of t == x of t+1).
    void validate() const;
};

// CSV with header episode,k,x0..x{n-1},u0..u{m-1},xn0..xn{n-1}
void write_dataset_csv(const TransitionDataset& data, std::ostream& out);
[[nodiscard]] TransitionDataset read_dataset_csv(std::istream& in);
void save_dataset(const TransitionDataset& data, const std::string& path);
[[nodiscard]] TransitionDataset load_dataset(const std::string& path);

// Latent-space regression data; column j is record j.
struct LiftedData {
    Mat z;
    Mat u;
    Mat z_next;

    [[nodiscard]] Eigen::Index size() const noexcept { return z.cols(); }
};

[[nodiscard]] LiftedData lift_dataset(const Dictionary& dictionary, const TransitionDataset& data);

struct LinearModel {
    Mat a;
    Mat b;
};

struct LiftedModel {
    Dictionary dictionary;
    Decoder decoder;
    Mat a;
    Mat b;

    [[nodiscard]] int latent_dim() const noexcept { return static_cast<int>(a.rows()); }
    [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(b.cols()); }
    [[nodiscard]] int state_dim() const noexcept { return dictionary.input_dim(); }
    void validate() const;
};

struct IdentificationConfig {
    double w_rho = 0.0;
    double w_ctrl = 0.0;
    double lambda_cond = 1.0;
    double epsilon_ctrl = 1e-6;
    double ridge = 0.0;
    int max_iters = 2000;
    double step_size = 1e-3;
    double tol = 1e-10;
    double rho_window = 1e-2;

    void validate() const;
};

// Ridge least squares on the mean objective:
//   [A B] = argmin (1/R) sum |z' - A z - B u|^2 + ridge |[A B]|_F^2
[[nodiscard]] LinearModel fit_edmd(const LiftedData& data, double ridge);
[[nodiscard]] LinearModel fit_edmd(const Dictionary& dictionary, const TransitionDataset& data, double ridge);

// Mean of |z' - (A z + B u)|^2 over records, compensated summation.
[[nodiscard]] double prediction_loss(const Mat& a, const Mat& b, const LiftedData& data);
// d/dA and d/dB of prediction_loss.
[[nodiscard]] LinearModel prediction_loss_gradient(const Mat& a, const Mat& b, const LiftedData& data);

[[nodiscard]] double spectral_radius(const Mat& a);
// Gradient of rho(A) taken through the dominant eigenpair (left/right
// eigenvector outer product). Eigenvalues of equal modulus that are not a
// conjugate pair contribute the average of their gradients.
[[nodiscard]] Mat spectral_radius_gradient(const Mat& a);
// Gradients of |lambda_i| for every eigenvalue with |lambda_i| >= rho(A) - window * max(1, rho(A)),
// one per conjugate pair.
[[nodiscard]] std::vector<Mat> dominant_modulus_gradients(const Mat& a, double window);

// [B, AB, ..., A^{N-1} B]
[[nodiscard]] Mat controllability_matrix(const Mat& a, const Mat& b);

struct SingularRange {
    double sigma_min = 0.0;
    double sigma_max = 0.0;
};
[[nodiscard]] SingularRange controllability_singular_values(const Mat& a, const Mat& b);

// -log(sigma_min(C) + eps) + lambda * sigma_max(C) / (sigma_min(C) + eps)
[[nodiscard]] double controllability_loss(const Mat& a, const Mat& b, double epsilon, double lambda_cond);
[[nodiscard]] LinearModel controllability_loss_gradient(const Mat& a, const Mat& b, double epsilon, double lambda_cond);

[[nodiscard]] double koopman_loss(const Mat& a, const Mat& b, const LiftedData& data, const IdentificationConfig& config);
[[nodiscard]] LinearModel koopman_loss_gradient(const Mat& a, const Mat& b, const LiftedData& data,
                                                const IdentificationConfig& config);
// Negative of the descent direction used by fit_regularized: the minimum-norm
// element of the convex hull of the loss gradients taken with each eigenvalue
// inside rho_window of the spectral radius. Equals koopman_loss_gradient when
// w_rho = 0 or a single eigenvalue (pair) is dominant.
[[nodiscard]] LinearModel koopman_descent_direction(const Mat& a, const Mat& b, const LiftedData& data,
                                                    const IdentificationConfig& config);

struct FitReport {
    LinearModel model;
    LinearModel initial;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

// Gradient descent on L_pred + w_rho rho(A) + w_ctrl L_ctrl, starting from
// fit_edmd. A step is accepted once it lowers the loss by at least tol; the
// trial step is halved up to 40 times, then doubled up to 10 times. With
// w_rho > 0 a failed search is retried with the eigenvalue window doubled (up
// to 6 times). Stops at max_iters or when no step is accepted. The returned
// loss never exceeds the initial loss.
[[nodiscard]] FitReport fit_regularized(const LiftedData& data, const IdentificationConfig& config);
[[nodiscard]] FitReport fit_regularized(const Dictionary& dictionary, const TransitionDataset& data,
                                        const IdentificationConfig& config);

// d = g(x_next) - (A g(x) + B u)
[[nodiscard]] Vec residual(const LiftedModel& model, const Vec& x, const Vec& u, const Vec& x_next);

}  // namespace ckoop
