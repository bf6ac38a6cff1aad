#pragma once

#include <cstdint>
#include <vector>

#include "ckoop/koopman_id.hpp"
#include "ckoop/lifting.hpp"

namespace ckoop {

struct EncoderTrainingOptions {
    int latent_dim = 6;
    int hidden = 16;
    int iterations = 200;
    int batch = 256;
    double step_size = 0.05;
    double recon_weight = 0.1;
    double ctrl_weight = 0.1;
    double epsilon_ctrl = 1e-6;
    double lambda_cond = 1.0;
    double fd_step = 1e-6;
    double ls_ridge = 1e-8;

    void validate() const;
};

struct EncoderTrainingResult {
    Dictionary dictionary;
    Decoder decoder;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

// Loss on one batch: normalized one-step latent residual under the batch
// least-squares (A, B), plus recon_weight * mean |x - psi(phi(x))|^2 and
// ctrl_weight * controllability loss of that (A, B).
[[nodiscard]] double encoder_loss(const Mlp& encoder, const Mlp& decoder, const TransitionDataset& batch,
                                  const EncoderTrainingOptions& options);

// Tanh encoder/decoder pair trained by finite-difference gradient descent
// with step halving on a fixed batch drawn from `data` with `seed`.
[[nodiscard]] EncoderTrainingResult train_encoder(const TransitionDataset& data, const EncoderTrainingOptions& options,
                                                  std::uint64_t seed);

}  // namespace ckoop
