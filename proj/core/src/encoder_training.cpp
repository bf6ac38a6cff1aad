#include "ckoop/encoder_training.hpp"

#include <cmath>

#include "ckoop/errors.hpp"

namespace ckoop {

void EncoderTrainingOptions::validate() const {
    if (latent_dim <= 0) throw InputError("encoder: latent_dim must be > 0");
    if (hidden <= 0 || hidden > 32) throw InputError("encoder: hidden width must lie in [1,32]");
    if (iterations < 0) throw InputError("encoder: iterations must be >= 0");
    if (batch <= 0) throw InputError("encoder: batch must be > 0");
    if (!(step_size > 0)) throw InputError("encoder: step_size must be > 0");
    if (!(recon_weight >= 0) || !(ctrl_weight >= 0)) throw InputError("encoder: weights must be >= 0");
    if (!(fd_step > 0) || !(epsilon_ctrl > 0) || !(ls_ridge >= 0)) throw InputError("encoder: bad numeric option");
}

double encoder_loss(const Mlp& encoder, const Mlp& decoder, const TransitionDataset& batch,
                    const EncoderTrainingOptions& options) {
    const auto count = static_cast<Eigen::Index>(batch.records.size());
    const int big_n = encoder.output_dim();
    const int m = batch.input_dim();
    LiftedData d;
    d.z.resize(big_n, count);
    d.z_next.resize(big_n, count);
    d.u.resize(m, count);
    CompensatedSum recon;
    for (Eigen::Index i = 0; i < count; ++i) {
        const auto& r = batch.records[static_cast<std::size_t>(i)];
        d.z.col(i) = encoder.eval(r.x);
        d.z_next.col(i) = encoder.eval(r.x_next);
        d.u.col(i) = r.u;
        recon.add((r.x - decoder.eval(d.z.col(i))).squaredNorm());
    }
    const LinearModel ab = fit_edmd(d, options.ls_ridge);
    // Normalized so that shrinking the latent scale cannot reduce the loss.
    const double scale = d.z_next.squaredNorm() / static_cast<double>(count) + 1e-12;
    double loss = prediction_loss(ab.a, ab.b, d) / scale;
    loss += options.recon_weight * recon.value() / static_cast<double>(count);
    if (options.ctrl_weight > 0) {
        loss += options.ctrl_weight * controllability_loss(ab.a, ab.b, options.epsilon_ctrl, options.lambda_cond);
    }
    return loss;
}

EncoderTrainingResult train_encoder(const TransitionDataset& data, const EncoderTrainingOptions& options,
                                    std::uint64_t seed) {
    options.validate();
    data.validate();
    const int n = data.state_dim();
    Rng rng(seed);
    TransitionDataset batch;
    batch.source_seed = data.source_seed;
    for (int i = 0; i < options.batch; ++i) batch.records.push_back(data.records[rng.index(data.records.size())]);

    Mlp enc = Mlp::random(n, options.hidden, options.latent_dim, mix_seed(seed, 1));
    Mlp dec = Mlp::random(options.latent_dim, options.hidden, n, mix_seed(seed, 2));
    std::vector<double> theta = enc.flatten();
    const std::size_t split = theta.size();
    const auto dec_flat = dec.flatten();
    theta.insert(theta.end(), dec_flat.begin(), dec_flat.end());

    const auto unpack = [&](const std::vector<double>& p, Mlp& e, Mlp& d) {
        e = Mlp::unflatten(n, options.hidden, options.latent_dim, std::span(p).first(split));
        d = Mlp::unflatten(options.latent_dim, options.hidden, n, std::span(p).subspan(split));
    };
    const auto loss_of = [&](const std::vector<double>& p) {
        Mlp e;
        Mlp d;
        unpack(p, e, d);
        try {
            return encoder_loss(e, d, batch, options);
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    EncoderTrainingResult out;
    double loss = loss_of(theta);
    if (!std::isfinite(loss)) throw OptimizationError("train_encoder: initial loss is not finite", {loss});
    out.initial_loss = loss;
    out.trace.push_back(loss);
    std::vector<double> grad(theta.size());
    for (int it = 0; it < options.iterations; ++it) {
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double saved = theta[j];
            theta[j] = saved + options.fd_step;
            const double fp = loss_of(theta);
            theta[j] = saved - options.fd_step;
            const double fm = loss_of(theta);
            theta[j] = saved;
            grad[j] = (fp - fm) / (2.0 * options.fd_step);
            if (!std::isfinite(grad[j])) grad[j] = 0.0;
        }
        double step = options.step_size;
        bool accepted = false;
        std::vector<double> trial(theta.size());
        for (int h = 0; h < 30; ++h) {
            for (std::size_t j = 0; j < theta.size(); ++j) trial[j] = theta[j] - step * grad[j];
            const double tl = loss_of(trial);
            if (std::isfinite(tl) && tl < loss) {
                theta.swap(trial);
                loss = tl;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        out.trace.push_back(loss);
        out.iterations = it + 1;
    }
    unpack(theta, enc, dec);
    out.dictionary = Dictionary::trained_encoder(std::move(enc), "tanh encoder");
    out.decoder = Decoder::trained(std::move(dec));
    out.final_loss = loss;
    return out;
}

}  // namespace ckoop
