#include "ckoop/lifting.hpp"

#include <algorithm>
#include <cmath>

#include "ckoop/errors.hpp"

namespace ckoop {

std::string to_string(DictionaryKind kind) {
    switch (kind) {
        case DictionaryKind::IdentityAugmented: return "identity_augmented";
        case DictionaryKind::RadialBasis: return "radial_basis";
        case DictionaryKind::TrainedEncoder: return "trained_encoder";
    }
    return "unknown";
}

std::string to_string(DecoderKind kind) {
    switch (kind) {
        case DecoderKind::Projection: return "projection";
        case DecoderKind::LinearLeastSquares: return "linear";
        case DecoderKind::TrainedDecoder: return "trained";
    }
    return "unknown";
}

DictionaryKind parse_dictionary_kind(std::string_view text) {
    if (text == "identity_augmented") return DictionaryKind::IdentityAugmented;
    if (text == "radial_basis") return DictionaryKind::RadialBasis;
    if (text == "trained_encoder") return DictionaryKind::TrainedEncoder;
    throw InputError("unknown dictionary kind '" + std::string(text) + "'");
}

DecoderKind parse_decoder_kind(std::string_view text) {
    if (text == "projection") return DecoderKind::Projection;
    if (text == "linear") return DecoderKind::LinearLeastSquares;
    if (text == "trained") return DecoderKind::TrainedDecoder;
    throw InputError("unknown decoder kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Mlp

std::size_t Mlp::parameter_count() const noexcept {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

Vec Mlp::eval(const Vec& x) const {
    const Vec h = (w1 * x + b1).array().tanh().matrix();
    return w2 * h + b2;
}

std::vector<double> Mlp::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (Eigen::Index i = 0; i < w1.rows(); ++i)
        for (Eigen::Index j = 0; j < w1.cols(); ++j) out.push_back(w1(i, j));
    for (Eigen::Index i = 0; i < b1.size(); ++i) out.push_back(b1(i));
    for (Eigen::Index i = 0; i < w2.rows(); ++i)
        for (Eigen::Index j = 0; j < w2.cols(); ++j) out.push_back(w2(i, j));
    for (Eigen::Index i = 0; i < b2.size(); ++i) out.push_back(b2(i));
    return out;
}

Mlp Mlp::unflatten(int input_dim, int hidden_dim, int output_dim, std::span<const double> flat) {
    const std::size_t expected = static_cast<std::size_t>(hidden_dim) * (input_dim + 1) +
                                 static_cast<std::size_t>(output_dim) * (hidden_dim + 1);
    if (flat.size() != expected) {
        throw InputError("network parameter count " + std::to_string(flat.size()) + " != expected " +
                         std::to_string(expected));
    }
    Mlp net;
    net.w1.resize(hidden_dim, input_dim);
    net.b1.resize(hidden_dim);
    net.w2.resize(output_dim, hidden_dim);
    net.b2.resize(output_dim);
    std::size_t p = 0;
    for (int i = 0; i < hidden_dim; ++i)
        for (int j = 0; j < input_dim; ++j) net.w1(i, j) = flat[p++];
    for (int i = 0; i < hidden_dim; ++i) net.b1(i) = flat[p++];
    for (int i = 0; i < output_dim; ++i)
        for (int j = 0; j < hidden_dim; ++j) net.w2(i, j) = flat[p++];
    for (int i = 0; i < output_dim; ++i) net.b2(i) = flat[p++];
    return net;
}

Mlp Mlp::random(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
    Rng rng(seed);
    Mlp net;
    net.w1.resize(hidden_dim, input_dim);
    net.b1 = Vec::Zero(hidden_dim);
    net.w2.resize(output_dim, hidden_dim);
    net.b2 = Vec::Zero(output_dim);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (Eigen::Index i = 0; i < net.w1.size(); ++i) net.w1.data()[i] = s1 * rng.normal();
    for (Eigen::Index i = 0; i < net.w2.size(); ++i) net.w2.data()[i] = s2 * rng.normal();
    return net;
}

// ---------------------------------------------------------------------------
// Dictionary

Dictionary Dictionary::identity_augmented(int input_dim, bool constant, Mat centers, Vec widths,
                                          std::string description) {
    Dictionary d;
    d.kind_ = DictionaryKind::IdentityAugmented;
    d.input_dim_ = input_dim;
    d.constant_ = constant;
    if (centers.size() == 0) centers.resize(0, input_dim);
    d.centers_ = std::move(centers);
    d.widths_ = std::move(widths);
    d.latent_dim_ = input_dim + (constant ? 1 : 0) + static_cast<int>(d.centers_.rows());
    d.description_ = std::move(description);
    d.validate();
    return d;
}

Dictionary Dictionary::radial_basis(int input_dim, Mat centers, Vec widths, std::string description) {
    Dictionary d;
    d.kind_ = DictionaryKind::RadialBasis;
    d.input_dim_ = input_dim;
    d.centers_ = std::move(centers);
    d.widths_ = std::move(widths);
    d.latent_dim_ = static_cast<int>(d.centers_.rows());
    d.description_ = std::move(description);
    d.validate();
    return d;
}

Dictionary Dictionary::trained_encoder(Mlp net, std::string description) {
    Dictionary d;
    d.kind_ = DictionaryKind::TrainedEncoder;
    d.input_dim_ = net.input_dim();
    d.latent_dim_ = net.output_dim();
    d.net_ = std::move(net);
    d.description_ = std::move(description);
    d.validate();
    return d;
}

namespace {

void read_rbf(int n, std::span<const double> p, std::size_t& pos, Mat& centers, Vec& widths) {
    if (pos >= p.size()) throw InputError("dictionary parameters truncated");
    const auto k = static_cast<Eigen::Index>(p[pos++]);
    if (k < 0 || p.size() != pos + static_cast<std::size_t>(k) * (n + 1)) {
        throw InputError("dictionary parameter count does not match RBF layout");
    }
    centers.resize(k, n);
    widths.resize(k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) centers(i, j) = p[pos++];
    for (Eigen::Index i = 0; i < k; ++i) widths(i) = p[pos++];
}

void write_rbf(const Mat& centers, const Vec& widths, std::vector<double>& out) {
    out.push_back(static_cast<double>(centers.rows()));
    for (Eigen::Index i = 0; i < centers.rows(); ++i)
        for (Eigen::Index j = 0; j < centers.cols(); ++j) out.push_back(centers(i, j));
    for (Eigen::Index i = 0; i < widths.size(); ++i) out.push_back(widths(i));
}

}  // namespace

Dictionary Dictionary::from_parameters(DictionaryKind kind, int input_dim, int latent_dim,
                                       std::span<const double> parameters, std::string description) {
    Dictionary d;
    std::size_t pos = 0;
    switch (kind) {
        case DictionaryKind::IdentityAugmented: {
            if (parameters.empty()) throw InputError("dictionary parameters truncated");
            const bool constant = parameters[pos++] != 0.0;
            Mat centers;
            Vec widths;
            read_rbf(input_dim, parameters, pos, centers, widths);
            d = identity_augmented(input_dim, constant, std::move(centers), std::move(widths), std::move(description));
            break;
        }
        case DictionaryKind::RadialBasis: {
            Mat centers;
            Vec widths;
            read_rbf(input_dim, parameters, pos, centers, widths);
            d = radial_basis(input_dim, std::move(centers), std::move(widths), std::move(description));
            break;
        }
        case DictionaryKind::TrainedEncoder: {
            if (parameters.empty()) throw InputError("dictionary parameters truncated");
            const int hidden = static_cast<int>(parameters[0]);
            d = trained_encoder(Mlp::unflatten(input_dim, hidden, latent_dim, parameters.subspan(1)),
                                std::move(description));
            break;
        }
    }
    if (d.latent_dim() != latent_dim) {
        throw InputError("dictionary latent_dim " + std::to_string(latent_dim) + " inconsistent with parameters (" +
                         std::to_string(d.latent_dim()) + ")");
    }
    return d;
}

std::vector<double> Dictionary::parameters() const {
    std::vector<double> out;
    switch (kind_) {
        case DictionaryKind::IdentityAugmented:
            out.push_back(constant_ ? 1.0 : 0.0);
            write_rbf(centers_, widths_, out);
            break;
        case DictionaryKind::RadialBasis:
            write_rbf(centers_, widths_, out);
            break;
        case DictionaryKind::TrainedEncoder: {
            out.push_back(static_cast<double>(net_.hidden_dim()));
            const auto flat = net_.flatten();
            out.insert(out.end(), flat.begin(), flat.end());
            break;
        }
    }
    return out;
}

void Dictionary::validate() const {
    if (input_dim_ <= 0) throw InputError("dictionary input_dim must be positive");
    if (latent_dim_ <= 0) throw InputError("dictionary latent_dim must be positive");
    if (kind_ != DictionaryKind::TrainedEncoder) {
        if (centers_.cols() != input_dim_ && centers_.rows() > 0) throw InputError("RBF centers have wrong width");
        if (widths_.size() != centers_.rows()) throw InputError("RBF widths/centers count mismatch");
        if (!centers_.allFinite() || !widths_.allFinite()) throw InputError("RBF parameters must be finite");
        if (widths_.size() > 0 && widths_.minCoeff() <= 0.0) throw InputError("RBF widths must be positive");
    } else {
        const auto flat = net_.flatten();
        if (!std::all_of(flat.begin(), flat.end(), [](double v) { return std::isfinite(v); })) {
            throw InputError("encoder weights must be finite");
        }
    }
}

// ---------------------------------------------------------------------------
// Decoder

Decoder Decoder::projection(int latent_dim, int output_dim) {
    if (output_dim <= 0 || latent_dim < output_dim) {
        throw InputError("projection decoder needs latent_dim >= output_dim > 0");
    }
    Decoder d;
    d.kind_ = DecoderKind::Projection;
    d.latent_dim_ = latent_dim;
    d.output_dim_ = output_dim;
    d.weights_ = Mat::Identity(output_dim, latent_dim);
    return d;
}

Decoder Decoder::linear(Mat weights) {
    if (weights.size() == 0) throw InputError("linear decoder weights are empty");
    if (!weights.allFinite()) throw InputError("decoder weights must be finite");
    Decoder d;
    d.kind_ = DecoderKind::LinearLeastSquares;
    d.latent_dim_ = static_cast<int>(weights.cols());
    d.output_dim_ = static_cast<int>(weights.rows());
    d.weights_ = std::move(weights);
    return d;
}

Decoder Decoder::trained(Mlp net) {
    const auto flat = net.flatten();
    if (!std::all_of(flat.begin(), flat.end(), [](double v) { return std::isfinite(v); })) {
        throw InputError("decoder weights must be finite");
    }
    Decoder d;
    d.kind_ = DecoderKind::TrainedDecoder;
    d.latent_dim_ = net.input_dim();
    d.output_dim_ = net.output_dim();
    d.net_ = std::move(net);
    return d;
}

Decoder Decoder::from_parameters(DecoderKind kind, int latent_dim, int output_dim, std::span<const double> parameters) {
    switch (kind) {
        case DecoderKind::Projection:
            return projection(latent_dim, output_dim);
        case DecoderKind::LinearLeastSquares: {
            if (parameters.size() != static_cast<std::size_t>(latent_dim) * output_dim) {
                throw InputError("linear decoder parameter count mismatch");
            }
            Mat w(output_dim, latent_dim);
            std::size_t p = 0;
            for (int i = 0; i < output_dim; ++i)
                for (int j = 0; j < latent_dim; ++j) w(i, j) = parameters[p++];
            return linear(std::move(w));
        }
        case DecoderKind::TrainedDecoder: {
            if (parameters.empty()) throw InputError("decoder parameters truncated");
            const int hidden = static_cast<int>(parameters[0]);
            return trained(Mlp::unflatten(latent_dim, hidden, output_dim, parameters.subspan(1)));
        }
    }
    throw InputError("unknown decoder kind");
}

std::vector<double> Decoder::parameters() const {
    std::vector<double> out;
    switch (kind_) {
        case DecoderKind::Projection:
            break;
        case DecoderKind::LinearLeastSquares:
            for (Eigen::Index i = 0; i < weights_.rows(); ++i)
                for (Eigen::Index j = 0; j < weights_.cols(); ++j) out.push_back(weights_(i, j));
            break;
        case DecoderKind::TrainedDecoder: {
            out.push_back(static_cast<double>(net_.hidden_dim()));
            const auto flat = net_.flatten();
            out.insert(out.end(), flat.begin(), flat.end());
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Operations

namespace {

double gaussian(const Vec& x, const Mat& centers, const Vec& widths, Eigen::Index i) {
    const double d2 = (x.transpose() - centers.row(i)).squaredNorm();
    return std::exp(-d2 / (2.0 * widths(i) * widths(i)));
}

}  // namespace

Vec lift(const Dictionary& dictionary, const Vec& x) {
    const int n = dictionary.input_dim();
    if (x.size() != n) {
        throw InputError("lift: state has length " + std::to_string(x.size()) + ", expected " + std::to_string(n));
    }
    if (!x.allFinite()) throw InputError("lift: state is not finite");
    Vec z(dictionary.latent_dim());
    switch (dictionary.kind()) {
        case DictionaryKind::IdentityAugmented: {
            z.head(n) = x;
            Eigen::Index pos = n;
            if (dictionary.has_constant()) z(pos++) = 1.0;
            for (Eigen::Index i = 0; i < dictionary.rbf_centers().rows(); ++i) {
                z(pos++) = gaussian(x, dictionary.rbf_centers(), dictionary.rbf_widths(), i);
            }
            break;
        }
        case DictionaryKind::RadialBasis:
            for (Eigen::Index i = 0; i < dictionary.rbf_centers().rows(); ++i) {
                z(i) = gaussian(x, dictionary.rbf_centers(), dictionary.rbf_widths(), i);
            }
            break;
        case DictionaryKind::TrainedEncoder:
            z = dictionary.network().eval(x);
            break;
    }
    return z;
}

Vec decode(const Decoder& decoder, const Vec& z) {
    if (z.size() != decoder.latent_dim()) {
        throw InputError("decode: latent vector has length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(decoder.latent_dim()));
    }
    switch (decoder.kind()) {
        case DecoderKind::Projection:
            return z.head(decoder.output_dim());
        case DecoderKind::LinearLeastSquares:
            return decoder.weights() * z;
        case DecoderKind::TrainedDecoder:
            return decoder.network().eval(z);
    }
    throw InputError("decode: unknown decoder kind");
}

Mat lift_jacobian(const Dictionary& dictionary, const Vec& x, double fd_step) {
    const int n = dictionary.input_dim();
    if (x.size() != n) throw InputError("lift_jacobian: dimension mismatch");
    const int big_n = dictionary.latent_dim();
    Mat jac = Mat::Zero(big_n, n);
    const auto rbf_rows = [&](Eigen::Index first_row) {
        const Mat& c = dictionary.rbf_centers();
        const Vec& w = dictionary.rbf_widths();
        for (Eigen::Index i = 0; i < c.rows(); ++i) {
            const double phi = gaussian(x, c, w, i);
            jac.row(first_row + i) = -phi * (x.transpose() - c.row(i)) / (w(i) * w(i));
        }
    };
    switch (dictionary.kind()) {
        case DictionaryKind::IdentityAugmented:
            jac.topRows(n).setIdentity();
            rbf_rows(n + (dictionary.has_constant() ? 1 : 0));
            break;
        case DictionaryKind::RadialBasis:
            rbf_rows(0);
            break;
        case DictionaryKind::TrainedEncoder:
            for (int j = 0; j < n; ++j) {
                Vec xp = x;
                Vec xm = x;
                xp(j) += fd_step;
                xm(j) -= fd_step;
                jac.col(j) = (lift(dictionary, xp) - lift(dictionary, xm)) / (2.0 * fd_step);
            }
            break;
    }
    return jac;
}

double round_trip_residual(const Dictionary& dictionary, const Decoder& decoder, const Vec& x) {
    if (decoder.latent_dim() != dictionary.latent_dim() || decoder.output_dim() != dictionary.input_dim()) {
        throw InputError("round_trip_residual: dictionary/decoder dimensions disagree");
    }
    return (x - decode(decoder, lift(dictionary, x))).norm();
}

Decoder fit_linear_decoder(const Dictionary& dictionary, std::span<const Vec> states, double ridge) {
    if (states.empty()) throw InputError("fit_linear_decoder: no samples");
    if (ridge < 0.0) throw InputError("fit_linear_decoder: ridge must be >= 0");
    const int n = dictionary.input_dim();
    const int big_n = dictionary.latent_dim();
    Mat gram = Mat::Zero(big_n, big_n);
    Mat cross = Mat::Zero(n, big_n);
    for (const Vec& x : states) {
        const Vec z = lift(dictionary, x);
        gram.noalias() += z * z.transpose();
        cross.noalias() += x * z.transpose();
    }
    gram.diagonal().array() += ridge;
    Eigen::ColPivHouseholderQR<Mat> qr(gram);
    qr.setThreshold(1e-13);
    if (qr.rank() < big_n) {
        throw NumericalError("fit_linear_decoder: feature Gram matrix is rank deficient (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(big_n) + "); add ridge");
    }
    // W gram = cross  =>  gram^T W^T = cross^T, gram symmetric.
    Mat weights = qr.solve(cross.transpose()).transpose();
    if (!weights.allFinite()) throw NumericalError("fit_linear_decoder: non-finite weights");
    return Decoder::linear(std::move(weights));
}

double median_pairwise_distance(std::span<const Vec> points) {
    if (points.size() < 2) throw InputError("median_pairwise_distance: need at least two points");
    std::vector<double> d;
    d.reserve(points.size() * (points.size() - 1) / 2);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) d.push_back((points[i] - points[j]).norm());
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (d.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(d.begin(), mid);
    return 0.5 * (lower + upper);
}

Dictionary make_rbf_augmented_dictionary(std::span<const Vec> states, bool constant, int rbf_count,
                                         std::uint64_t seed, std::size_t width_sample) {
    if (states.empty()) throw InputError("make_rbf_augmented_dictionary: no states");
    const int n = static_cast<int>(states.front().size());
    if (rbf_count < 0) throw InputError("rbf_count must be >= 0");
    if (rbf_count == 0) return Dictionary::identity_augmented(n, constant, {}, {}, "identity augmented");

    Rng rng(seed);
    std::vector<Vec> sample;
    const std::size_t count = std::min(width_sample, states.size());
    sample.reserve(count);
    for (std::size_t i = 0; i < count; ++i) sample.push_back(states[rng.index(states.size())]);
    const double width = sample.size() >= 2 ? median_pairwise_distance(sample) : 1.0;

    Mat centers(rbf_count, n);
    for (int i = 0; i < rbf_count; ++i) centers.row(i) = states[rng.index(states.size())].transpose();
    Vec widths = Vec::Constant(rbf_count, width > 0.0 ? width : 1.0);
    return Dictionary::identity_augmented(n, constant, std::move(centers), std::move(widths),
                                          "identity augmented with " + std::to_string(rbf_count) + " gaussian rbf");
}

}  // namespace ckoop
