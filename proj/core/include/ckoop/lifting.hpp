#pragma once

#include <span>
#include <string>
#include <vector>

#include "ckoop/numeric.hpp"

namespace ckoop {

enum class DictionaryKind { IdentityAugmented, RadialBasis, TrainedEncoder };
enum class DecoderKind { Projection, LinearLeastSquares, TrainedDecoder };

[[nodiscard]] std::string to_string(DictionaryKind kind);
[[nodiscard]] std::string to_string(DecoderKind kind);
[[nodiscard]] DictionaryKind parse_dictionary_kind(std::string_view text);
[[nodiscard]] DecoderKind parse_decoder_kind(std::string_view text);

// One-hidden-layer tanh network: out = w2 * tanh(w1 * x + b1) + b2.
struct Mlp {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;

    [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(w1.cols()); }
    [[nodiscard]] int hidden_dim() const noexcept { return static_cast<int>(w1.rows()); }
    [[nodiscard]] int output_dim() const noexcept { return static_cast<int>(w2.rows()); }
    [[nodiscard]] std::size_t parameter_count() const noexcept;

    [[nodiscard]] Vec eval(const Vec& x) const;

    // Flattened as [w1 row-major, b1, w2 row-major, b2].
    [[nodiscard]] std::vector<double> flatten() const;
    static Mlp unflatten(int input_dim, int hidden_dim, int output_dim, std::span<const double> flat);
    static Mlp random(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed);
};

// Observable map g: R^n -> R^N.
//
// Parameter layouts (flat array, as stored in model files):
//   IdentityAugmented: [constant_flag, k, centers (k*n, row-major), widths (k)]
//                      features = (x, [1], rbf_1(x) .. rbf_k(x)), N = n + flag + k
//   RadialBasis:       [k, centers, widths], N = k
//   TrainedEncoder:    [hidden, mlp parameters]
// Gaussian features are exp(-|x - c|^2 / (2 w^2)).
class Dictionary {
public:
    Dictionary() = default;
    static Dictionary identity_augmented(int input_dim, bool constant, Mat centers = {}, Vec widths = {},
                                         std::string description = {});
    static Dictionary radial_basis(int input_dim, Mat centers, Vec widths, std::string description = {});
    static Dictionary trained_encoder(Mlp net, std::string description = {});
    static Dictionary from_parameters(DictionaryKind kind, int input_dim, int latent_dim,
                                      std::span<const double> parameters, std::string description = {});

    [[nodiscard]] DictionaryKind kind() const noexcept { return kind_; }
    [[nodiscard]] int input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] int latent_dim() const noexcept { return latent_dim_; }
    [[nodiscard]] const std::string& description() const noexcept { return description_; }
    [[nodiscard]] std::vector<double> parameters() const;

    [[nodiscard]] bool has_constant() const noexcept { return constant_; }
    [[nodiscard]] const Mat& rbf_centers() const noexcept { return centers_; }
    [[nodiscard]] const Vec& rbf_widths() const noexcept { return widths_; }
    [[nodiscard]] const Mlp& network() const noexcept { return net_; }

private:
    void validate() const;

    DictionaryKind kind_ = DictionaryKind::IdentityAugmented;
    int input_dim_ = 0;
    int latent_dim_ = 0;
    bool constant_ = false;
    Mat centers_;
    Vec widths_;
    Mlp net_;
    std::string description_;
};

// Map back to state space, psi: R^N -> R^n.
class Decoder {
public:
    Decoder() = default;
    static Decoder projection(int latent_dim, int output_dim);
    // x = weights * z, weights is n x N.
    static Decoder linear(Mat weights);
    static Decoder trained(Mlp net);
    static Decoder from_parameters(DecoderKind kind, int latent_dim, int output_dim,
                                   std::span<const double> parameters);

    [[nodiscard]] DecoderKind kind() const noexcept { return kind_; }
    [[nodiscard]] int latent_dim() const noexcept { return latent_dim_; }
    [[nodiscard]] int output_dim() const noexcept { return output_dim_; }
    // Linear map for Projection/LinearLeastSquares; empty for TrainedDecoder.
    [[nodiscard]] const Mat& weights() const noexcept { return weights_; }
    [[nodiscard]] const Mlp& network() const noexcept { return net_; }
    [[nodiscard]] std::vector<double> parameters() const;

private:
    DecoderKind kind_ = DecoderKind::Projection;
    int latent_dim_ = 0;
    int output_dim_ = 0;
    Mat weights_;
    Mlp net_;
};

[[nodiscard]] Vec lift(const Dictionary& dictionary, const Vec& x);
[[nodiscard]] Vec decode(const Decoder& decoder, const Vec& z);

inline constexpr double kDefaultJacobianStep = 1e-5;

// dg/dx, N x n. Analytic for IdentityAugmented and RadialBasis, central
// differences for TrainedEncoder.
[[nodiscard]] Mat lift_jacobian(const Dictionary& dictionary, const Vec& x, double fd_step = kDefaultJacobianStep);

// |x - psi(g(x))|
[[nodiscard]] double round_trip_residual(const Dictionary& dictionary, const Decoder& decoder, const Vec& x);

// Ridge least squares W = argmin sum |x - W g(x)|^2 + ridge |W|_F^2.
[[nodiscard]] Decoder fit_linear_decoder(const Dictionary& dictionary, std::span<const Vec> states, double ridge);

// Median of all pairwise Euclidean distances between the given points.
[[nodiscard]] double median_pairwise_distance(std::span<const Vec> points);

// Identity-augmented dictionary with `rbf_count` Gaussian features whose centers
// are drawn from `states` and whose common width is the median pairwise
// distance of `width_sample` states drawn with replacement.
[[nodiscard]] Dictionary make_rbf_augmented_dictionary(std::span<const Vec> states, bool constant, int rbf_count,
                                                       std::uint64_t seed, std::size_t width_sample = 500);

}  // namespace ckoop
