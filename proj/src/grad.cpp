#include "gyro/grad.hpp"

#include <cmath>
#include <exception>
#include <thread>

namespace gyro {

namespace {

Vector row_of(const Matrix& m, Eigen::Index i) { return m.row(i).transpose(); }

bool uses_euclidean(LossMode mode) { return mode != LossMode::hyperbolic; }
bool uses_hyperbolic(LossMode mode) { return mode != LossMode::euclidean; }

// dL/dD(i, k) for the summed pairwise cross-entropy.
Matrix distance_sensitivity(const DistanceMatrix& dist, const Pairing& pairing, double tau) {
    const TripletWeightMatrix w = triplet_weights(dist, pairing, tau);
    Matrix g = -w.p_neg / tau;
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        g(row, static_cast<Eigen::Index>(pairing.pos[i])) = (1.0 - w.p_pos(row)) / tau;
    }
    return g;
}

// Pushes dL/dD through the cosine distance onto the rows of z.
void accumulate_cosine(const Matrix& z, const Matrix& sensitivity, Matrix& grad) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index k = 0; k < z.rows(); ++k) {
            const double s = sensitivity(i, k);
            if (s == 0.0 || i == k) continue;
            const PairGrad pg = cos_dist_grad(row_of(z, i), row_of(z, k));
            grad.row(i) += s * pg.dx.transpose();
            grad.row(k) += s * pg.dy.transpose();
        }
    }
}

// Pushes dL/dD through the ball distance onto the ball points.
void accumulate_ball(const Matrix& points, const Matrix& sensitivity, const BallConfig& cfg, Matrix& grad) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index k = 0; k < points.rows(); ++k) {
            const double s = sensitivity(i, k);
            if (s == 0.0 || i == k) continue;
            const PairGrad pg = ball_dist_grad(row_of(points, i), row_of(points, k), cfg);
            grad.row(i) += s * pg.dx.transpose();
            grad.row(k) += s * pg.dy.transpose();
        }
    }
}

// Gradient with respect to the pre-map row given the gradient on its ball point.
Vector ball_map_vjp(const VecRef& pre, const BallConfig& cfg, const VecRef& grad_point) {
    const Vector clipped = clip_norm(pre, cfg.r);
    return clip_norm_vjp(pre, cfg.r, exp_map_0_vjp(clipped, cfg, grad_point));
}

Matrix pull_back_ball(const Matrix& zh_pre, const Matrix& grad_points, const BallConfig& cfg) {
    Matrix out(zh_pre.rows(), zh_pre.cols());
    for (Eigen::Index i = 0; i < zh_pre.rows(); ++i) {
        out.row(i) = ball_map_vjp(row_of(zh_pre, i), cfg, row_of(grad_points, i)).transpose();
    }
    return out;
}

void check_rows(const Matrix& m, const Pairing& pairing, const char* name) {
    if (static_cast<std::size_t>(m.rows()) != pairing.size()) {
        throw InvalidArgument(name, "row count differs from pairing size");
    }
}

}  // namespace

Matrix map_to_ball(const Matrix& zh_pre, const BallConfig& cfg) {
    Matrix out(zh_pre.rows(), zh_pre.cols());
    for (Eigen::Index i = 0; i < zh_pre.rows(); ++i) {
        out.row(i) = exp_map_0(clip_norm(row_of(zh_pre, i), cfg.r), cfg).transpose();
    }
    return out;
}

LossEvaluation evaluate_loss(const Matrix& ze, const Matrix& zh_pre, const Pairing& pairing,
                             const LossConfig& config, const BallConfig& cfg, bool with_grad) {
    config.validate();
    cfg.validate();
    pairing.validate();
    const bool euc = uses_euclidean(config.mode);
    const bool hyp = uses_hyperbolic(config.mode);
    if (euc) check_rows(ze, pairing, "ze");
    if (hyp) check_rows(zh_pre, pairing, "zh_pre");

    DistanceMatrix d_cos;
    DistanceMatrix d_hyp;
    Matrix points;
    if (euc) d_cos = distance_matrix(ze, Metric::cosine, cfg);
    if (hyp) {
        points = map_to_ball(zh_pre, cfg);
        d_hyp = distance_matrix(points, Metric::hyperbolic, cfg);
    }

    LossEvaluation out;
    Matrix sens_cos;
    Matrix sens_hyp;
    switch (config.mode) {
        case LossMode::euclidean:
            out.loss = pairwise_ce_loss(d_cos, pairing, config.tau);
            if (with_grad) sens_cos = distance_sensitivity(d_cos, pairing, config.tau);
            break;
        case LossMode::hyperbolic:
            out.loss = pairwise_ce_loss(d_hyp, pairing, config.tau);
            if (with_grad) sens_hyp = distance_sensitivity(d_hyp, pairing, config.tau);
            break;
        case LossMode::mixed: {
            DistanceMatrix fused{d_cos.d + config.lambda * d_hyp.d, Metric::mixed, cfg.c};
            out.loss = pairwise_ce_loss(fused, pairing, config.tau);
            if (with_grad) {
                sens_cos = distance_sensitivity(fused, pairing, config.tau);
                sens_hyp = config.lambda * sens_cos;
            }
            break;
        }
        case LossMode::convex_combo: {
            const double w = config.combo_weight;
            out.loss = convex_combo_loss(pairwise_ce_loss(d_hyp, pairing, config.tau),
                                         pairwise_ce_loss(d_cos, pairing, config.tau), w);
            if (with_grad) {
                sens_hyp = w * distance_sensitivity(d_hyp, pairing, config.tau);
                sens_cos = (1.0 - w) * distance_sensitivity(d_cos, pairing, config.tau);
            }
            break;
        }
    }
    if (!with_grad) return out;

    if (euc) {
        out.grad_e = Matrix::Zero(ze.rows(), ze.cols());
        accumulate_cosine(ze, sens_cos, out.grad_e);
    }
    if (hyp) {
        Matrix grad_points = Matrix::Zero(points.rows(), points.cols());
        accumulate_ball(points, sens_hyp, cfg, grad_points);
        out.grad_h = pull_back_ball(zh_pre, grad_points, cfg);
    }
    return out;
}

double loss_value(const PairedBatch& batch, const LossConfig& config, const BallConfig& cfg) {
    batch.validate();
    return evaluate_loss(batch.z, batch.z, batch.pairing, config, cfg, false).loss;
}

Matrix loss_grad_embeddings(const PairedBatch& batch, const LossConfig& config, const BallConfig& cfg) {
    batch.validate();
    const LossEvaluation eval = evaluate_loss(batch.z, batch.z, batch.pairing, config, cfg, true);
    Matrix grad = Matrix::Zero(batch.z.rows(), batch.z.cols());
    if (eval.grad_e.size() > 0) grad += eval.grad_e;
    if (eval.grad_h.size() > 0) grad += eval.grad_h;
    return grad;
}

std::vector<AnchorDecomposition> grad_decomposition(const PairedBatch& batch, const LossConfig& config,
                                                    const BallConfig& cfg) {
    config.validate();
    cfg.validate();
    batch.validate();
    const Matrix& z = batch.z;
    const Pairing& pairing = batch.pairing;
    const bool euc = uses_euclidean(config.mode);
    const bool hyp = uses_hyperbolic(config.mode);

    Matrix points;
    DistanceMatrix d_cos;
    DistanceMatrix d_hyp;
    if (euc) d_cos = distance_matrix(z, Metric::cosine, cfg);
    if (hyp) {
        points = map_to_ball(z, cfg);
        d_hyp = distance_matrix(points, Metric::hyperbolic, cfg);
    }

    // Adds scale * grad_Z D(i, j) for one geometry.
    auto add_cos = [&](Matrix& dir, Eigen::Index i, Eigen::Index j, double scale) {
        const PairGrad pg = cos_dist_grad(row_of(z, i), row_of(z, j));
        dir.row(i) += scale * pg.dx.transpose();
        dir.row(j) += scale * pg.dy.transpose();
    };
    auto add_hyp = [&](Matrix& dir, Eigen::Index i, Eigen::Index j, double scale) {
        const PairGrad pg = ball_dist_grad(row_of(points, i), row_of(points, j), cfg);
        dir.row(i) += scale * ball_map_vjp(row_of(z, i), cfg, pg.dx).transpose();
        dir.row(j) += scale * ball_map_vjp(row_of(z, j), cfg, pg.dy).transpose();
    };

    // Appends the terms of one softmax; cos_scale / hyp_scale select the
    // geometries that make up the distance.
    auto append_terms = [&](AnchorDecomposition& part, const TripletWeightMatrix& weights, double weight_scale,
                            double cos_scale, double hyp_scale) {
        const auto i = static_cast<Eigen::Index>(part.anchor);
        const auto p = static_cast<Eigen::Index>(part.positive);
        for (std::size_t k = 0; k < pairing.size(); ++k) {
            if (!pairing.is_negative(part.anchor, k)) continue;
            const auto kk = static_cast<Eigen::Index>(k);
            TripletTerm term;
            term.negative = k;
            term.weight = weight_scale * weights.p_neg(i, kk);
            term.direction = Matrix::Zero(z.rows(), z.cols());
            if (cos_scale != 0.0) {
                add_cos(term.direction, i, p, cos_scale);
                add_cos(term.direction, i, kk, -cos_scale);
            }
            if (hyp_scale != 0.0) {
                add_hyp(term.direction, i, p, hyp_scale);
                add_hyp(term.direction, i, kk, -hyp_scale);
            }
            part.terms.push_back(std::move(term));
        }
    };

    TripletWeightMatrix w_main;
    TripletWeightMatrix w_cos;
    switch (config.mode) {
        case LossMode::euclidean: w_main = triplet_weights(d_cos, pairing, config.tau); break;
        case LossMode::hyperbolic: w_main = triplet_weights(d_hyp, pairing, config.tau); break;
        case LossMode::mixed:
            w_main = triplet_weights(DistanceMatrix{d_cos.d + config.lambda * d_hyp.d, Metric::mixed, cfg.c}, pairing,
                                     config.tau);
            break;
        case LossMode::convex_combo:
            w_main = triplet_weights(d_hyp, pairing, config.tau);
            w_cos = triplet_weights(d_cos, pairing, config.tau);
            break;
    }

    std::vector<AnchorDecomposition> parts;
    parts.reserve(pairing.size());
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        AnchorDecomposition part;
        part.anchor = i;
        part.positive = pairing.pos[i];
        switch (config.mode) {
            case LossMode::euclidean: append_terms(part, w_main, 1.0, 1.0, 0.0); break;
            case LossMode::hyperbolic: append_terms(part, w_main, 1.0, 0.0, 1.0); break;
            case LossMode::mixed: append_terms(part, w_main, 1.0, 1.0, config.lambda); break;
            case LossMode::convex_combo:
                append_terms(part, w_main, config.combo_weight, 0.0, 1.0);
                append_terms(part, w_cos, 1.0 - config.combo_weight, 1.0, 0.0);
                break;
        }
        parts.push_back(std::move(part));
    }
    return parts;
}

Matrix reassemble(const std::vector<AnchorDecomposition>& parts, double tau, Eigen::Index rows, Eigen::Index cols) {
    Matrix grad = Matrix::Zero(rows, cols);
    for (const auto& part : parts) {
        for (const auto& term : part.terms) grad += (term.weight / tau) * term.direction;
    }
    return grad;
}

Vector fd_gradient(const ScalarFn& fn, const Vector& params, double step, unsigned threads) {
    if (!(step > 0.0)) throw InvalidArgument("fd.step", "must be > 0");
    const Eigen::Index n = params.size();
    Vector out(n);

    // Each worker owns a contiguous coordinate range and records its first failure.
    auto run_range = [&](Eigen::Index begin, Eigen::Index end, Eigen::Index& failed) {
        Vector probe = params;
        for (Eigen::Index j = begin; j < end; ++j) {
            const double saved = probe(j);
            probe(j) = saved + step;
            const double plus = fn(probe);
            probe(j) = saved - step;
            const double minus = fn(probe);
            probe(j) = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus)) {
                failed = j;
                return;
            }
            out(j) = (plus - minus) / (2.0 * step);
        }
    };

    const auto workers = static_cast<Eigen::Index>(std::max(1u, threads));
    std::vector<Eigen::Index> failed(static_cast<std::size_t>(workers), -1);
    if (workers == 1 || n < 2) {
        run_range(0, n, failed[0]);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
        const Eigen::Index chunk = (n + workers - 1) / workers;
        for (Eigen::Index w = 0; w < workers; ++w) {
            const Eigen::Index begin = std::min(n, w * chunk);
            const Eigen::Index end = std::min(n, begin + chunk);
            pool.emplace_back([&, w, begin, end] {
                try {
                    run_range(begin, end, failed[static_cast<std::size_t>(w)]);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    for (const Eigen::Index j : failed) {
        if (j >= 0) throw NumericError("fd_gradient: non-finite evaluation at coordinate " + std::to_string(j));
    }
    return out;
}

GradientReport compare_gradients(const Vector& analytic, const Vector& numeric, double floor) {
    if (analytic.size() != numeric.size()) throw InvalidArgument("gradcheck", "gradient lengths differ");
    GradientReport report{analytic, numeric, 0.0, 0.0};
    // Coordinates far below the gradient's own scale sit under the
    // finite-difference roundoff, so the floor scales with the largest entry.
    const double scaled_floor = floor * std::max(1.0, numeric.size() > 0 ? numeric.cwiseAbs().maxCoeff() : 0.0);
    for (Eigen::Index j = 0; j < analytic.size(); ++j) {
        const double err = std::abs(analytic(j) - numeric(j));
        const double scale = std::max({std::abs(analytic(j)), std::abs(numeric(j)), scaled_floor});
        report.max_abs_err = std::max(report.max_abs_err, err);
        report.max_rel_err = std::max(report.max_rel_err, err / scale);
    }
    return report;
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) throw InvalidArgument("unflatten", "size mismatch");
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

}  // namespace gyro
