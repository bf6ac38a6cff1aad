#include "ckoop/koopman_id.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

#include "ckoop/csv.hpp"
#include "ckoop/errors.hpp"

namespace ckoop {

// ---------------------------------------------------------------------------
// Dataset

std::vector<Vec> TransitionDataset::states() const {
    std::vector<Vec> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.x);
    return out;
}

void TransitionDataset::validate() const {
    if (records.empty()) return;
    const auto n = records.front().x.size();
    const auto m = records.front().u.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.x.size() != n || r.x_next.size() != n || r.u.size() != m) {
            throw InputError("dataset record " + std::to_string(i) + " has inconsistent dimensions");
        }
        if (i + 1 < records.size() && records[i + 1].episode == r.episode) {
            if (records[i + 1].x != r.x_next) {
                throw InputError("dataset record " + std::to_string(i + 1) + " does not continue its episode");
            }
        }
    }
}

void write_dataset_csv(const TransitionDataset& data, std::ostream& out) {
    const int n = data.state_dim();
    const int m = data.input_dim();
    out << "# source_seed=" << data.source_seed << '\n';
    out << "episode,k";
    for (int i = 0; i < n; ++i) out << ",x" << i;
    for (int i = 0; i < m; ++i) out << ",u" << i;
    for (int i = 0; i < n; ++i) out << ",xn" << i;
    out << '\n';
    for (const auto& r : data.records) {
        out << r.episode << ',' << r.k;
        for (int i = 0; i < n; ++i) out << ',' << format_double(r.x(i));
        for (int i = 0; i < m; ++i) out << ',' << format_double(r.u(i));
        for (int i = 0; i < n; ++i) out << ',' << format_double(r.x_next(i));
        out << '\n';
    }
}

TransitionDataset read_dataset_csv(std::istream& in) {
    const csv::Table t = csv::read(in);
    if (t.header.size() < 2 || t.header[0] != "episode" || t.header[1] != "k") {
        throw InputError("dataset: header must start with episode,k");
    }
    int n = 0;
    int m = 0;
    for (std::size_t i = 2; i < t.header.size(); ++i) {
        const auto& h = t.header[i];
        if (h.rfind("xn", 0) == 0) continue;
        if (h.rfind('x', 0) == 0) ++n;
        else if (h.rfind('u', 0) == 0) ++m;
    }
    if (t.header.size() != static_cast<std::size_t>(2 + 2 * n + m) || n == 0) {
        throw InputError("dataset: header does not match episode,k,x*,u*,xn* layout");
    }
    for (int i = 0; i < n; ++i) {
        if (t.header[2 + i] != "x" + std::to_string(i) || t.header[2 + n + m + i] != "xn" + std::to_string(i)) {
            throw InputError("dataset: unexpected column order");
        }
    }
    TransitionDataset data;
    if (auto it = t.metadata.find("source_seed"); it != t.metadata.end()) {
        data.source_seed = static_cast<std::uint64_t>(std::stoull(it->second));
    }
    data.records.reserve(t.rows.size());
    for (const auto& row : t.rows) {
        Transition r;
        r.episode = static_cast<int>(parse_int(row[0]));
        r.k = static_cast<int>(parse_int(row[1]));
        r.x.resize(n);
        r.u.resize(m);
        r.x_next.resize(n);
        for (int i = 0; i < n; ++i) r.x(i) = parse_double(row[2 + i]);
        for (int i = 0; i < m; ++i) r.u(i) = parse_double(row[2 + n + i]);
        for (int i = 0; i < n; ++i) r.x_next(i) = parse_double(row[2 + n + m + i]);
        data.records.push_back(std::move(r));
    }
    return data;
}

void save_dataset(const TransitionDataset& data, const std::string& path) {
    std::ostringstream os;
    write_dataset_csv(data, os);
    csv::write_text_file(path, os.str());
}

TransitionDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    try {
        return read_dataset_csv(in);
    } catch (const InputError& e) {
        throw InputError(path + ": " + e.what());
    }
}

LiftedData lift_dataset(const Dictionary& dictionary, const TransitionDataset& data) {
    if (data.records.empty()) throw InputError("lift_dataset: empty dataset");
    const auto count = static_cast<Eigen::Index>(data.records.size());
    LiftedData out;
    out.z.resize(dictionary.latent_dim(), count);
    out.z_next.resize(dictionary.latent_dim(), count);
    out.u.resize(data.input_dim(), count);
    for (Eigen::Index j = 0; j < count; ++j) {
        const auto& r = data.records[static_cast<std::size_t>(j)];
        out.z.col(j) = lift(dictionary, r.x);
        out.z_next.col(j) = lift(dictionary, r.x_next);
        if (r.u.size() != out.u.rows()) throw InputError("lift_dataset: inconsistent input dimension");
        out.u.col(j) = r.u;
    }
    return out;
}

void LiftedModel::validate() const {
    const auto n = dictionary.latent_dim();
    if (a.rows() != n || a.cols() != n) throw InputError("model: A must be N x N with N = latent_dim");
    if (b.rows() != n || b.cols() < 1) throw InputError("model: B must be N x m");
    if (decoder.latent_dim() != n || decoder.output_dim() != dictionary.input_dim()) {
        throw InputError("model: decoder dimensions disagree with dictionary");
    }
    if (!a.allFinite() || !b.allFinite()) throw InputError("model: A, B must be finite");
}

void IdentificationConfig::validate() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(w_rho) || w_rho < 0) throw InputError("w_rho must be finite and >= 0");
    if (!finite(w_ctrl) || w_ctrl < 0) throw InputError("w_ctrl must be finite and >= 0");
    if (!finite(lambda_cond) || lambda_cond < 0) throw InputError("lambda_cond must be finite and >= 0");
    if (!finite(epsilon_ctrl) || epsilon_ctrl <= 0) throw InputError("epsilon_ctrl must be > 0");
    if (!finite(ridge) || ridge < 0) throw InputError("ridge must be finite and >= 0");
    if (max_iters < 0) throw InputError("max_iters must be >= 0");
    if (!finite(step_size) || step_size <= 0) throw InputError("step_size must be > 0");
    if (!finite(tol) || tol <= 0) throw InputError("tol must be > 0");
    if (!finite(rho_window) || rho_window < 0) throw InputError("rho_window must be finite and >= 0");
}

// ---------------------------------------------------------------------------
// Least squares

namespace {

Mat stacked_regressors(const LiftedData& data) {
    Mat phi(data.z.rows() + data.u.rows(), data.size());
    phi.topRows(data.z.rows()) = data.z;
    phi.bottomRows(data.u.rows()) = data.u;
    return phi;
}

void check_shapes(const Mat& a, const Mat& b, const LiftedData& data) {
    if (a.rows() != data.z.rows() || a.cols() != data.z.rows() || b.rows() != data.z.rows() ||
        b.cols() != data.u.rows()) {
        throw InputError("model matrices do not match the lifted data dimensions");
    }
}

}  // namespace

LinearModel fit_edmd(const LiftedData& data, double ridge) {
    if (ridge < 0) throw InputError("fit_edmd: ridge must be >= 0");
    const auto big_n = data.z.rows();
    const auto m = data.u.rows();
    if (data.size() < big_n + m) {
        throw InputError("fit_edmd: need at least N+m = " + std::to_string(big_n + m) + " records, got " +
                         std::to_string(data.size()));
    }
    const Mat phi = stacked_regressors(data);
    const double inv_r = 1.0 / static_cast<double>(data.size());
    Mat gram = inv_r * (phi * phi.transpose());
    const Mat cross = inv_r * (data.z_next * phi.transpose());
    gram.diagonal().array() += ridge;
    Eigen::ColPivHouseholderQR<Mat> qr(gram);
    qr.setThreshold(1e-12);
    if (qr.rank() < gram.rows()) {
        throw NumericalError("fit_edmd: regressor Gram matrix is singular (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(gram.rows()) + "); use ridge > 0");
    }
    const Mat theta = qr.solve(cross.transpose()).transpose();
    if (!theta.allFinite()) throw NumericalError("fit_edmd: non-finite solution");
    return {theta.leftCols(big_n), theta.rightCols(m)};
}

LinearModel fit_edmd(const Dictionary& dictionary, const TransitionDataset& data, double ridge) {
    return fit_edmd(lift_dataset(dictionary, data), ridge);
}

double prediction_loss(const Mat& a, const Mat& b, const LiftedData& data) {
    check_shapes(a, b, data);
    if (data.size() == 0) throw InputError("prediction_loss: empty data");
    CompensatedSum acc;
    for (Eigen::Index j = 0; j < data.size(); ++j) {
        acc.add((data.z_next.col(j) - a * data.z.col(j) - b * data.u.col(j)).squaredNorm());
    }
    return acc.value() / static_cast<double>(data.size());
}

LinearModel prediction_loss_gradient(const Mat& a, const Mat& b, const LiftedData& data) {
    check_shapes(a, b, data);
    const Mat resid = a * data.z + b * data.u - data.z_next;
    const double scale = 2.0 / static_cast<double>(data.size());
    return {scale * resid * data.z.transpose(), scale * resid * data.u.transpose()};
}

// ---------------------------------------------------------------------------
// Spectral radius

double spectral_radius(const Mat& a) {
    if (a.rows() != a.cols()) throw InputError("spectral_radius: matrix must be square");
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Mat> eig(a, false);
    if (eig.info() != Eigen::Success) throw NumericalError("spectral_radius: eigensolver failed");
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Mat spectral_radius_gradient(const Mat& a) {
    if (a.rows() != a.cols()) throw InputError("spectral_radius_gradient: matrix must be square");
    const auto n = a.rows();
    Eigen::EigenSolver<Mat> eig(a, true);
    if (eig.info() != Eigen::Success) throw NumericalError("spectral_radius_gradient: eigensolver failed");
    const Eigen::VectorXcd lambda = eig.eigenvalues();
    const Eigen::MatrixXcd right = eig.eigenvectors();
    // Rows of V^{-1} are left eigenvectors normalized so that y_i v_i = 1.
    const Eigen::MatrixXcd left = right.inverse();
    const double rho = lambda.cwiseAbs().maxCoeff();
    Mat grad = Mat::Zero(n, n);
    if (rho == 0.0 || !left.allFinite()) return grad;

    const double tie_tol = 1e-9 * std::max(1.0, rho);
    int used = 0;
    std::vector<std::complex<double>> taken;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto li = lambda(i);
        if (std::abs(std::abs(li) - rho) > tie_tol) continue;
        // A conjugate partner gives the identical real gradient; count it once.
        bool dup = false;
        for (const auto& t : taken) {
            if (std::abs(t - std::conj(li)) <= tie_tol) dup = true;
        }
        if (dup) continue;
        taken.push_back(li);
        // d lambda / dA_jk = y_ij v_ik ; d|lambda| = Re(conj(lambda) d lambda) / |lambda|
        const Eigen::MatrixXcd dlam = left.row(i).transpose() * right.col(i).transpose();
        grad += (std::conj(li) * dlam).real() / std::abs(li);
        ++used;
    }
    if (used > 1) grad /= static_cast<double>(used);
    return grad;
}

std::vector<Mat> dominant_modulus_gradients(const Mat& a, double window) {
    if (a.rows() != a.cols()) throw InputError("dominant_modulus_gradients: matrix must be square");
    Eigen::EigenSolver<Mat> eig(a, true);
    if (eig.info() != Eigen::Success) throw NumericalError("dominant_modulus_gradients: eigensolver failed");
    const Eigen::VectorXcd lambda = eig.eigenvalues();
    const Eigen::MatrixXcd right = eig.eigenvectors();
    const Eigen::MatrixXcd left = right.inverse();
    const double rho = lambda.cwiseAbs().maxCoeff();
    std::vector<Mat> out;
    if (rho == 0.0 || !left.allFinite()) return out;
    const double floor = rho - window * std::max(1.0, rho);
    const double pair_tol = 1e-9 * std::max(1.0, rho);
    std::vector<std::complex<double>> taken;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        const auto li = lambda(i);
        if (std::abs(li) < floor || std::abs(li) == 0.0) continue;
        bool dup = false;
        for (const auto& t : taken) {
            if (std::abs(t - std::conj(li)) <= pair_tol && li.imag() != 0.0) dup = true;
        }
        if (dup) continue;
        taken.push_back(li);
        const Eigen::MatrixXcd dlam = left.row(i).transpose() * right.col(i).transpose();
        out.push_back((std::conj(li) * dlam).real() / std::abs(li));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Controllability

Mat controllability_matrix(const Mat& a, const Mat& b) {
    if (a.rows() != a.cols() || b.rows() != a.rows()) throw InputError("controllability_matrix: shape mismatch");
    const auto n = a.rows();
    const auto m = b.cols();
    Mat c(n, n * m);
    Mat block = b;
    for (Eigen::Index j = 0; j < n; ++j) {
        c.middleCols(j * m, m) = block;
        block = a * block;
    }
    return c;
}

SingularRange controllability_singular_values(const Mat& a, const Mat& b) {
    const Mat c = controllability_matrix(a, b);
    Eigen::JacobiSVD<Mat> svd(c);
    const Vec& s = svd.singularValues();
    // s has min(N, N m) = N entries, sorted descending.
    return {s(s.size() - 1), s(0)};
}

double controllability_loss(const Mat& a, const Mat& b, double epsilon, double lambda_cond) {
    const auto [smin, smax] = controllability_singular_values(a, b);
    return -std::log(smin + epsilon) + lambda_cond * smax / (smin + epsilon);
}

LinearModel controllability_loss_gradient(const Mat& a, const Mat& b, double epsilon, double lambda_cond) {
    const auto n = a.rows();
    const auto m = b.cols();
    const Mat c = controllability_matrix(a, b);
    Eigen::JacobiSVD<Mat> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& s = svd.singularValues();
    const auto last = s.size() - 1;
    const double smin = s(last);
    const double smax = s(0);
    const double denom = smin + epsilon;
    const double d_smin = -1.0 / denom - lambda_cond * smax / (denom * denom);
    const double d_smax = lambda_cond / denom;
    // dsigma_i = u_i^T dC v_i
    const Mat g_c = d_smin * svd.matrixU().col(last) * svd.matrixV().col(last).transpose() +
                    d_smax * svd.matrixU().col(0) * svd.matrixV().col(0).transpose();

    // C_j = A^j B. dC_j = sum_{p<j} A^p dA A^{j-1-p} B + A^j dB.
    std::vector<Mat> powers(static_cast<std::size_t>(n));
    powers[0] = Mat::Identity(n, n);
    for (Eigen::Index p = 1; p < n; ++p) powers[static_cast<std::size_t>(p)] = a * powers[static_cast<std::size_t>(p - 1)];
    Mat grad_a = Mat::Zero(n, n);
    Mat grad_b = Mat::Zero(n, m);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Mat gj = g_c.middleCols(j * m, m);
        grad_b += powers[static_cast<std::size_t>(j)].transpose() * gj;
        for (Eigen::Index p = 0; p < j; ++p) {
            const Mat right_factor = powers[static_cast<std::size_t>(j - 1 - p)] * b;
            grad_a += powers[static_cast<std::size_t>(p)].transpose() * gj * right_factor.transpose();
        }
    }
    return {grad_a, grad_b};
}

// ---------------------------------------------------------------------------
// Regularized fit

double koopman_loss(const Mat& a, const Mat& b, const LiftedData& data, const IdentificationConfig& config) {
    double loss = prediction_loss(a, b, data);
    if (config.w_rho > 0) loss += config.w_rho * spectral_radius(a);
    if (config.w_ctrl > 0) loss += config.w_ctrl * controllability_loss(a, b, config.epsilon_ctrl, config.lambda_cond);
    return loss;
}

LinearModel koopman_loss_gradient(const Mat& a, const Mat& b, const LiftedData& data,
                                  const IdentificationConfig& config) {
    LinearModel g = prediction_loss_gradient(a, b, data);
    if (config.w_rho > 0) g.a += config.w_rho * spectral_radius_gradient(a);
    if (config.w_ctrl > 0) {
        const LinearModel gc = controllability_loss_gradient(a, b, config.epsilon_ctrl, config.lambda_cond);
        g.a += config.w_ctrl * gc.a;
        g.b += config.w_ctrl * gc.b;
    }
    return g;
}

LinearModel koopman_descent_direction(const Mat& a, const Mat& b, const LiftedData& data,
                                      const IdentificationConfig& config) {
    if (!(config.w_rho > 0)) return koopman_loss_gradient(a, b, data, config);
    IdentificationConfig smooth = config;
    smooth.w_rho = 0.0;
    const LinearModel base = koopman_loss_gradient(a, b, data, smooth);
    const std::vector<Mat> tied = dominant_modulus_gradients(a, config.rho_window);
    if (tied.empty()) return base;
    if (tied.size() == 1) return {base.a + config.w_rho * tied[0], base.b};
    // min |sum_i w_i h_i| over the simplex, h_i = base + w_rho g_i (only the
    // A block differs between candidates). Frank-Wolfe with exact line search.
    const auto k = tied.size();
    std::vector<Mat> h(k);
    for (std::size_t i = 0; i < k; ++i) h[i] = base.a + config.w_rho * tied[i];
    const double bb = base.b.squaredNorm();
    Mat gram(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) gram(i, j) = (h[i].array() * h[j].array()).sum() + bb;
    }
    Vec w = Vec::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k));
    for (int it = 0; it < 500; ++it) {
        const Vec grad = gram * w;
        Eigen::Index best = 0;
        grad.minCoeff(&best);
        Vec d = -w;
        d(best) += 1.0;
        const double curv = d.dot(gram * d);
        const double slope = d.dot(grad);
        if (slope >= -1e-15 * std::max(1.0, w.dot(grad)) || curv <= 0.0) break;
        w += std::min(1.0, -slope / curv) * d;
    }
    Mat dir_a = Mat::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < k; ++i) dir_a += w(static_cast<Eigen::Index>(i)) * h[i];
    return {dir_a, base.b};
}

FitReport fit_regularized(const LiftedData& data, const IdentificationConfig& config) {
    config.validate();
    FitReport report;
    report.initial = fit_edmd(data, config.ridge);
    LinearModel current = report.initial;
    double loss = koopman_loss(current.a, current.b, data, config);
    report.initial_loss = loss;
    report.trace.push_back(loss);
    if (!std::isfinite(loss)) {
        throw OptimizationError("fit_regularized: initial loss is not finite", report.trace);
    }

    constexpr int kMaxHalvings = 40;
    constexpr int kMaxWidenings = 6;
    constexpr int kMaxExpansions = 10;
    for (int it = 0; it < config.max_iters; ++it) {
        IdentificationConfig local = config;
        bool progressed = false;
        for (int w = 0; w <= kMaxWidenings && !progressed; ++w, local.rho_window *= 2.0) {
            const LinearModel g = koopman_descent_direction(current.a, current.b, data, local);
            if (!g.a.allFinite() || !g.b.allFinite()) {
                throw OptimizationError("fit_regularized: gradient diverged at iteration " + std::to_string(it),
                                        report.trace);
            }
            for (int h = 0; h <= kMaxHalvings + kMaxExpansions; ++h) {
                const double step = h <= kMaxHalvings ? config.step_size * std::ldexp(1.0, -h)
                                                      : config.step_size * std::ldexp(1.0, h - kMaxHalvings);
                LinearModel trial{current.a - step * g.a, current.b - step * g.b};
                const double trial_loss = koopman_loss(trial.a, trial.b, data, config);
                if (std::isfinite(trial_loss) && loss - trial_loss >= config.tol) {
                    current = std::move(trial);
                    loss = trial_loss;
                    progressed = true;
                    break;
                }
            }
            if (config.w_rho <= 0.0) break;
        }
        if (!progressed) break;
        report.trace.push_back(loss);
        report.iterations = it + 1;
    }
    report.model = std::move(current);
    report.final_loss = loss;
    return report;
}

FitReport fit_regularized(const Dictionary& dictionary, const TransitionDataset& data,
                          const IdentificationConfig& config) {
    return fit_regularized(lift_dataset(dictionary, data), config);
}

Vec residual(const LiftedModel& model, const Vec& x, const Vec& u, const Vec& x_next) {
    if (u.size() != model.b.cols()) throw InputError("residual: input dimension mismatch");
    return lift(model.dictionary, x_next) - (model.a * lift(model.dictionary, x) + model.b * u);
}

}  // namespace ckoop
