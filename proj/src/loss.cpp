#include "gyro/loss.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace gyro {

std::string to_string(Metric metric) {
    switch (metric) {
        case Metric::cosine: return "cos";
        case Metric::hyperbolic: return "hyp";
        case Metric::mixed: return "mix";
    }
    return "unknown";
}

std::string to_string(LossMode mode) {
    switch (mode) {
        case LossMode::euclidean: return "euclidean";
        case LossMode::hyperbolic: return "hyperbolic";
        case LossMode::mixed: return "mixed";
        case LossMode::convex_combo: return "convex_combo";
    }
    return "unknown";
}

Metric parse_metric(std::string_view text) {
    if (text == "cos" || text == "cosine") return Metric::cosine;
    if (text == "hyp" || text == "hyperbolic") return Metric::hyperbolic;
    if (text == "mix" || text == "mixed") return Metric::mixed;
    throw InvalidArgument("metric", "unknown metric '" + std::string(text) + "' (expected cos, hyp or mix)");
}

LossMode parse_loss_mode(std::string_view text) {
    if (text == "euclidean" || text == "cos") return LossMode::euclidean;
    if (text == "hyperbolic" || text == "hyp") return LossMode::hyperbolic;
    if (text == "mixed" || text == "mix") return LossMode::mixed;
    if (text == "convex_combo") return LossMode::convex_combo;
    throw InvalidArgument("mode", "unknown loss mode '" + std::string(text) + "'");
}

void Pairing::validate() const {
    const std::size_t k = labels.size();
    if (pos.size() != k) throw InvalidArgument("pairing.pos", "length differs from label count");
    if (k % 2 != 0) throw InvalidArgument("pairing", "batch size must be even (K = 2N)");
    if (k < 4) throw InvalidArgument("pairing", "need N >= 2 pairs so that negatives exist");
    std::set<Label> pair_labels;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t p = pos[i];
        if (p >= k) throw InvalidArgument("pairing.pos", "index out of range at row " + std::to_string(i));
        if (p == i) throw InvalidArgument("pairing.pos", "row " + std::to_string(i) + " is paired with itself");
        if (pos[p] != i) throw InvalidArgument("pairing.pos", "not an involution at row " + std::to_string(i));
        if (labels[p] != labels[i]) {
            throw InvalidArgument("pairing.labels", "rows " + std::to_string(i) + " and " + std::to_string(p) +
                                                        " are paired but carry different labels");
        }
        if (i < p) pair_labels.insert(labels[i]);
    }
    if (pair_labels.size() != k / 2) throw InvalidArgument("pairing.labels", "pair labels are not distinct");
}

Pairing Pairing::interleaved(const std::vector<Label>& pair_labels) {
    Pairing out;
    for (std::size_t p = 0; p < pair_labels.size(); ++p) {
        out.labels.push_back(pair_labels[p]);
        out.labels.push_back(pair_labels[p]);
        out.pos.push_back(2 * p + 1);
        out.pos.push_back(2 * p);
    }
    return out;
}

void PairedBatch::validate() const {
    pairing.validate();
    if (static_cast<std::size_t>(z.rows()) != pairing.size()) {
        throw InvalidArgument("batch.z", "row count differs from pairing size");
    }
}

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("loss.tau", "temperature must be > 0");
}

void check_shapes(const DistanceMatrix& dist, const Pairing& pairing) {
    pairing.validate();
    const auto k = static_cast<Eigen::Index>(pairing.size());
    if (dist.d.rows() != k || dist.d.cols() != k) {
        throw InvalidArgument("distance", "matrix shape does not match the batch");
    }
}

// log(exp(-D_ip / tau) + sum_neg exp(-D_ik / tau)), max-shifted. The leading
// term is split off and handled by log1p so that near-zero losses keep their
// relative precision.
struct LogPartition {
    double max_logit;
    double log1p_rest;
    double value() const { return max_logit + log1p_rest; }
};

LogPartition log_partition(const Matrix& d, const Pairing& pairing, std::size_t i, double tau) {
    const auto row = static_cast<Eigen::Index>(i);
    std::size_t best = pairing.pos[i];
    double max_logit = -d(row, static_cast<Eigen::Index>(best)) / tau;
    for (std::size_t k = 0; k < pairing.size(); ++k) {
        if (!pairing.is_negative(i, k)) continue;
        const double logit = -d(row, static_cast<Eigen::Index>(k)) / tau;
        if (logit > max_logit) {
            max_logit = logit;
            best = k;
        }
    }
    double rest = 0.0;
    for (std::size_t k = 0; k < pairing.size(); ++k) {
        if (k == i || k == best) continue;
        rest += std::exp(-d(row, static_cast<Eigen::Index>(k)) / tau - max_logit);
    }
    return {max_logit, std::log1p(rest)};
}

template <class DistFn>
DistanceMatrix build_matrix(const Matrix& z, Metric metric, double c, DistFn&& fn) {
    const Eigen::Index k = z.rows();
    DistanceMatrix out{Matrix::Zero(k, k), metric, c};
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = i + 1; j < k; ++j) {
            double value = 0.0;
            try {
                value = fn(z.row(i).transpose(), z.row(j).transpose());
            } catch (const DomainError& e) {
                throw DomainError("rows " + std::to_string(i) + ", " + std::to_string(j) + ": " + e.what());
            }
            out.d(i, j) = value;
            out.d(j, i) = value;
        }
    }
    return out;
}

}  // namespace

void LossConfig::validate() const {
    check_tau(tau);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("loss.lambda", "must be finite and >= 0");
    if (!(combo_weight >= 0.0 && combo_weight <= 1.0)) {
        throw InvalidArgument("loss.combo_weight", "must lie in [0, 1]");
    }
}

DistanceMatrix distance_matrix(const Matrix& z, Metric metric, const BallConfig& cfg) {
    switch (metric) {
        case Metric::cosine:
            return build_matrix(z, metric, 0.0, [](const VecRef& a, const VecRef& b) { return cos_dist(a, b); });
        case Metric::hyperbolic:
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                if (!inside_ball(z.row(i).transpose(), cfg.c)) {
                    throw DomainError("row " + std::to_string(i) + " lies outside the Poincare ball");
                }
            }
            return build_matrix(z, metric, cfg.c,
                                [&cfg](const VecRef& a, const VecRef& b) { return ball_dist(a, b, cfg); });
        case Metric::mixed:
            break;
    }
    throw InvalidArgument("metric", "mixed distances need two embeddings; use fused_distance_matrix");
}

DistanceMatrix distance_matrix(const PairedBatch& batch, Metric metric, const BallConfig& cfg) {
    batch.validate();
    return distance_matrix(batch.z, metric, cfg);
}

DistanceMatrix fused_distance_matrix(const Matrix& ze, const Matrix& zh, double lambda, const BallConfig& cfg) {
    if (ze.rows() != zh.rows()) throw InvalidArgument("mix", "branch outputs have different row counts");
    DistanceMatrix out = distance_matrix(ze, Metric::cosine, cfg);
    if (lambda != 0.0) out.d += lambda * distance_matrix(zh, Metric::hyperbolic, cfg).d;
    out.metric = Metric::mixed;
    out.c = cfg.c;
    return out;
}

Vector pairwise_ce_terms(const DistanceMatrix& dist, const Pairing& pairing, double tau) {
    check_tau(tau);
    check_shapes(dist, pairing);
    Vector terms(static_cast<Eigen::Index>(pairing.size()));
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        const double positive = dist.d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(pairing.pos[i]));
        const LogPartition lp = log_partition(dist.d, pairing, i, tau);
        // The positive logit never exceeds the log-partition; clamp rounding.
        terms(static_cast<Eigen::Index>(i)) = std::max(0.0, (positive / tau + lp.max_logit) + lp.log1p_rest);
    }
    return terms;
}

double pairwise_ce_loss(const DistanceMatrix& dist, const Pairing& pairing, double tau) {
    return pairwise_ce_terms(dist, pairing, tau).sum();
}

double infonce_loss(const PairedBatch& batch, double tau) {
    check_tau(tau);
    batch.validate();
    const Eigen::Index k = batch.z.rows();
    Matrix unit = batch.z;
    for (Eigen::Index i = 0; i < k; ++i) {
        const double norm = unit.row(i).norm();
        if (!(norm > 0.0)) throw DomainError("infonce_loss: row " + std::to_string(i) + " has zero norm");
        unit.row(i) /= norm;
    }
    // Logits s / tau are handled as distances -s / tau at unit temperature.
    DistanceMatrix neg_sim{-(unit * unit.transpose()) / tau, Metric::cosine, 0.0};
    return pairwise_ce_loss(neg_sim, batch.pairing, 1.0);
}

TripletWeightMatrix triplet_weights(const DistanceMatrix& dist, const Pairing& pairing, double tau) {
    check_tau(tau);
    check_shapes(dist, pairing);
    const auto k = static_cast<Eigen::Index>(pairing.size());
    TripletWeightMatrix out{Matrix::Zero(k, k), Vector::Zero(k)};
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double log_z = log_partition(dist.d, pairing, i, tau).value();
        for (std::size_t j = 0; j < pairing.size(); ++j) {
            if (!pairing.is_negative(i, j)) continue;
            const auto col = static_cast<Eigen::Index>(j);
            out.p_neg(row, col) = std::exp(-dist.d(row, col) / tau - log_z);
        }
        out.p_pos(row) = std::exp(-dist.d(row, static_cast<Eigen::Index>(pairing.pos[i])) / tau - log_z);
    }
    return out;
}

double mix_loss(const Matrix& zcos, const Matrix& zhyp, const Pairing& pairing, double tau, double lambda,
                const BallConfig& cfg) {
    if (zcos.rows() != zhyp.rows()) throw InvalidArgument("mix", "branch outputs have different row counts");
    if (static_cast<std::size_t>(zcos.rows()) != pairing.size()) {
        throw InvalidArgument("mix", "row count differs from pairing size");
    }
    return pairwise_ce_loss(fused_distance_matrix(zcos, zhyp, lambda, cfg), pairing, tau);
}

double convex_combo_loss(double l_hyp, double l_nce, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument("loss.combo_weight", "must lie in [0, 1]");
    return w * l_hyp + (1.0 - w) * l_nce;
}

}  // namespace gyro
