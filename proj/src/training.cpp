#include "gyro/training.hpp"

#include <cmath>

#include <fmt/format.h>

#include "gyro/grad.hpp"

namespace gyro {

namespace {

// Partial Fisher-Yates: the first `count` entries become a uniform sample.
template <typename T>
void shuffle_prefix(std::vector<T>& items, std::size_t count, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
        std::swap(items[i], items[pick(rng)]);
    }
}

}  // namespace

BatchIndices sample_batch(const Dataset& ds, std::size_t classes_per_batch, std::mt19937_64& rng) {
    if (classes_per_batch < 2) throw InvalidArgument("train.classes_per_batch", "must be >= 2");
    std::vector<Label> eligible;
    for (const auto& [label, rows] : ds.class_index) {
        if (rows.size() >= 2) eligible.push_back(label);
    }
    if (eligible.size() < classes_per_batch) {
        throw InvalidArgument("train.classes_per_batch",
                              fmt::format("batch needs {} classes with >= 2 samples, dataset has {}",
                                          classes_per_batch, eligible.size()));
    }
    shuffle_prefix(eligible, classes_per_batch, rng);
    eligible.resize(classes_per_batch);

    BatchIndices batch;
    batch.rows.reserve(2 * classes_per_batch);
    for (Label label : eligible) {
        std::vector<std::size_t> rows = ds.class_index.at(label);
        shuffle_prefix(rows, 2, rng);
        batch.rows.push_back(rows[0]);
        batch.rows.push_back(rows[1]);
    }
    batch.pairing = Pairing::interleaved(eligible);
    return batch;
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adaptive"; }

OptimizerKind parse_optimizer(std::string_view text) {
    if (text == "sgd") return OptimizerKind::sgd;
    if (text == "adaptive" || text == "adamw") return OptimizerKind::adaptive;
    throw InvalidArgument("train.optimizer.kind", "unknown optimizer '" + std::string(text) + "' (expected sgd or adaptive)");
}

void OptimizerConfig::validate() const {
    // lr = 0 is accepted: it freezes the model, which is useful as a baseline.
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("train.optimizer.lr", "must be finite and >= 0");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("train.optimizer.weight_decay", "must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("train.optimizer.beta1", "must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("train.optimizer.beta2", "must be in [0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("train.optimizer.eps", "must be > 0");
}

void Optimizer::step(Vector& params, const Vector& grad) {
    if (params.size() != grad.size()) throw InvalidArgument("optimizer", "gradient size mismatch");
    ++t_;
    if (cfg_.kind == OptimizerKind::sgd) {
        params -= cfg_.lr * grad;
        return;
    }
    if (m_.size() != params.size()) {
        m_ = Vector::Zero(params.size());
        v_ = Vector::Zero(params.size());
    }
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    params *= 1.0 - cfg_.lr * cfg_.weight_decay;
    params.array() -= cfg_.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
}

void TrainConfig::validate() const {
    if (classes_per_batch < 2) throw InvalidArgument("train.classes_per_batch", "must be >= 2");
    if (steps < 1) throw InvalidArgument("train.steps", "must be >= 1");
    if (!(grad_clip > 0.0)) throw InvalidArgument("train.grad_clip", "must be > 0");
    optimizer.validate();
    loss.validate();
    ball.validate();
    if (model.hidden < 1) throw InvalidArgument("model.hidden", "must be >= 1");
    if (model.embed < 1) throw InvalidArgument("model.embed", "must be >= 1");
    if (model.out < 1) throw InvalidArgument("model.out", "must be >= 1");
    if (model.input_dim < 0) throw InvalidArgument("model.input_dim", "must be >= 0");
}

ParamLossGrad batch_loss_grad(const EncoderParams& params, const Matrix& x, const Pairing& pairing,
                              const LossConfig& loss, const BallConfig& ball) {
    const EncoderForward fwd = encode(params, x);
    const LossEvaluation ev = evaluate_loss(fwd.ze, fwd.zh_pre, pairing, loss, ball);
    return {ev.loss, encoder_backward(params, x, fwd, ev.grad_e, ev.grad_h)};
}

EncoderParams initial_params(const TrainConfig& cfg, Eigen::Index input_dim) {
    EncoderShape shape = cfg.model;
    shape.input_dim = input_dim;
    std::mt19937_64 rng(cfg.seed);
    return init_encoder(shape, rng);
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (cfg.model.input_dim != 0 && cfg.model.input_dim != ds.dim()) {
        throw InvalidArgument("model.input_dim", fmt::format("config says {}, dataset has {}", cfg.model.input_dim, ds.dim()));
    }

    std::mt19937_64 rng(cfg.seed);
    EncoderShape shape = cfg.model;
    shape.input_dim = ds.dim();
    TrainResult result{init_encoder(shape, rng), {}, {}, {}};
    result.loss_trace.reserve(cfg.steps);
    result.grad_norms.reserve(cfg.steps);
    result.clipped_norms.reserve(cfg.steps);

    Optimizer opt(cfg.optimizer);
    Vector flat = result.params.flatten();
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const BatchIndices batch = sample_batch(ds, cfg.classes_per_batch, rng);
        Matrix x(static_cast<Eigen::Index>(batch.rows.size()), ds.dim());
        for (std::size_t i = 0; i < batch.rows.size(); ++i) {
            x.row(static_cast<Eigen::Index>(i)) = ds.x.row(static_cast<Eigen::Index>(batch.rows[i]));
        }

        ParamLossGrad lg;
        try {
            lg = batch_loss_grad(result.params, x, batch.pairing, cfg.loss, cfg.ball);
        } catch (const DomainError& e) {
            throw NumericError(fmt::format("step {}: {}", step, e.what()));
        } catch (const NumericError& e) {
            throw NumericError(fmt::format("step {}: {}", step, e.what()));
        }
        const double loss = lg.loss;
        Vector& grad = lg.grad;
        if (!std::isfinite(loss)) throw NumericError(fmt::format("step {}: non-finite loss", step));
        if (!grad.allFinite()) throw NumericError(fmt::format("step {}: non-finite gradient", step));

        const double norm = grad.norm();
        if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
        result.loss_trace.push_back(loss);
        result.grad_norms.push_back(norm);
        result.clipped_norms.push_back(grad.norm());

        opt.step(flat, grad);
        if (!flat.allFinite()) throw NumericError(fmt::format("step {}: parameters became non-finite", step));
        result.params.assign(flat);
    }
    return result;
}

std::pair<Matrix, Matrix> embed(const EncoderParams& params, const Matrix& x, const BallConfig& cfg) {
    EncoderForward fwd = encode(params, x);
    return {std::move(fwd.ze), map_to_ball(fwd.zh_pre, cfg)};
}

}  // namespace gyro
