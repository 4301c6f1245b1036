#pragma once

#include <cstdint>
#include <random>

#include "gyro/dataset.hpp"
#include "gyro/encoder.hpp"
#include "gyro/loss.hpp"

namespace gyro {

// Row indices into a Dataset plus the interleaved pairing: rows 2p and
// 2p + 1 are two distinct samples of the p-th drawn class.
struct BatchIndices {
    std::vector<std::size_t> rows;
    Pairing pairing;
};

/// Draws N distinct classes among those with at least two rows, then two
/// distinct rows of each.
BatchIndices sample_batch(const Dataset& ds, std::size_t classes_per_batch, std::mt19937_64& rng);

enum class OptimizerKind { sgd, adaptive };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adaptive;
    double lr = 1e-3;
    double weight_decay = 0.01;  // decoupled; adaptive only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// Plain SGD or AdamW (decoupled weight decay, bias-corrected moments).
class Optimizer {
public:
    explicit Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {}

    void step(Vector& params, const Vector& grad);
    std::uint64_t steps_taken() const { return t_; }

private:
    OptimizerConfig cfg_;
    Vector m_;
    Vector v_;
    std::uint64_t t_ = 0;
};

struct TrainConfig {
    std::size_t classes_per_batch = 8;
    std::size_t steps = 500;
    OptimizerConfig optimizer;
    double grad_clip = 3.0;
    std::uint64_t seed = 0;
    LossConfig loss;
    BallConfig ball;
    EncoderShape model;  // input_dim 0 means "take it from the dataset"

    void validate() const;
};

struct TrainResult {
    EncoderParams params;
    std::vector<double> loss_trace;
    std::vector<double> grad_norms;     // before clipping
    std::vector<double> clipped_norms;  // after clipping
};

struct ParamLossGrad {
    double loss = 0.0;
    Vector grad;  // with respect to params.flatten()
};

/// Loss of the configured mode on the encoded rows of x and its gradient with
/// respect to the encoder parameters.
ParamLossGrad batch_loss_grad(const EncoderParams& params, const Matrix& x, const Pairing& pairing,
                              const LossConfig& loss, const BallConfig& ball);

/// Initial parameters for a run: init_encoder seeded by cfg.seed.
EncoderParams initial_params(const TrainConfig& cfg, Eigen::Index input_dim);

/// Runs cfg.steps iterations of sample -> encode -> loss -> backprop ->
/// clip -> update. One RNG seeded from cfg.seed drives initialization and
/// sampling, so a run is fully determined by (dataset, cfg). Throws
/// NumericError naming the step when the loss or gradient is not finite.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

/// Forward pass returning (ze, ball points) for every row of x.
std::pair<Matrix, Matrix> embed(const EncoderParams& params, const Matrix& x, const BallConfig& cfg);

}  // namespace gyro
