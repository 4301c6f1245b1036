#pragma once

// Analytic loss gradients and the finite-difference oracle used to check them.
//
// A loss is evaluated on two branch outputs: `ze` feeds the cosine distance,
// `zh_pre` is clipped to radius r and sent through exp_map_0 before the
// hyperbolic distance. Single-input helpers feed the same rows to both.

#include <functional>

#include "gyro/loss.hpp"

namespace gyro {

struct LossEvaluation {
    double loss = 0.0;
    Matrix grad_e;  // dL/d ze, zero-sized when the mode has no Euclidean branch
    Matrix grad_h;  // dL/d zh_pre, zero-sized when the mode has no hyperbolic branch
};

/// Rows of zh_pre clipped to cfg.r and mapped into the ball.
Matrix map_to_ball(const Matrix& zh_pre, const BallConfig& cfg);

/// Loss of the selected mode and (optionally) its gradient with respect to
/// both branch inputs. Branches not used by the mode may be empty matrices.
LossEvaluation evaluate_loss(const Matrix& ze, const Matrix& zh_pre, const Pairing& pairing,
                             const LossConfig& config, const BallConfig& cfg, bool with_grad = true);

/// Loss of the selected mode with the batch rows feeding every branch.
double loss_value(const PairedBatch& batch, const LossConfig& config, const BallConfig& cfg);

/// Gradient of loss_value with respect to the batch rows.
Matrix loss_grad_embeddings(const PairedBatch& batch, const LossConfig& config, const BallConfig& cfg);

// One triplet (anchor, positive, negative) contribution: weight * direction,
// where direction = grad(D_{i,pos(i)} - D_{i,k}) over all batch rows.
struct TripletTerm {
    std::size_t negative = 0;
    double weight = 0.0;
    Matrix direction;
};

struct AnchorDecomposition {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::vector<TripletTerm> terms;
};

/// Per-anchor triplet decomposition of loss_grad_embeddings. For the
/// convex_combo mode each anchor lists the hyperbolic terms (weights scaled
/// by w) followed by the cosine terms (scaled by 1 - w).
std::vector<AnchorDecomposition> grad_decomposition(const PairedBatch& batch, const LossConfig& config,
                                                    const BallConfig& cfg);

/// Sum over anchors of (1 / tau) * sum_k weight * direction.
Matrix reassemble(const std::vector<AnchorDecomposition>& parts, double tau, Eigen::Index rows, Eigen::Index cols);

using ScalarFn = std::function<double(const Vector&)>;

/// Central differences (f(p + h e_j) - f(p - h e_j)) / 2h per coordinate.
/// With threads > 1 the coordinates are split across workers; the result
/// does not depend on the thread count. Throws NumericError naming the
/// coordinate when an evaluation is not finite.
Vector fd_gradient(const ScalarFn& fn, const Vector& params, double step = 1e-5, unsigned threads = 1);

struct GradientReport {
    Vector analytic;
    Vector numeric;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

/// Per-coordinate errors; the relative-error denominator is
/// max(|analytic|, |numeric|) floored at floor * max(1, max_j |numeric_j|).
GradientReport compare_gradients(const Vector& analytic, const Vector& numeric, double floor = 1e-8);

/// Flattens a row-major matrix into a vector and back.
Vector flatten(const Matrix& m);
Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace gyro
