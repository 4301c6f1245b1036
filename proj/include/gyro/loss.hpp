#pragma once

// Pairwise cross-entropy losses over distance matrices.
//
// For an anchor i with positive pos(i), the softmax runs over 2N - 1 terms:
// the positive and every negative k not in {i, pos(i)}. Losses are summed
// over anchors. Every softmax is evaluated in max-shifted log-sum-exp form.

#include <string>
#include <string_view>

#include "gyro/geometry.hpp"
#include "gyro/types.hpp"

namespace gyro {

enum class Metric { cosine, hyperbolic, mixed };
enum class LossMode { euclidean, hyperbolic, mixed, convex_combo };

std::string to_string(Metric metric);
std::string to_string(LossMode mode);
// Accepts "cos"/"cosine", "hyp"/"hyperbolic", "mix"/"mixed".
Metric parse_metric(std::string_view text);
// Accepts "euclidean"/"cos", "hyperbolic"/"hyp", "mixed"/"mix", "convex_combo".
LossMode parse_loss_mode(std::string_view text);

// Labels and the anchor -> positive involution of a batch of K = 2N rows.
struct Pairing {
    std::vector<Label> labels;
    std::vector<std::size_t> pos;

    std::size_t size() const { return labels.size(); }
    std::size_t pair_count() const { return labels.size() / 2; }
    bool is_negative(std::size_t anchor, std::size_t k) const { return k != anchor && k != pos[anchor]; }

    // K = 2N with N >= 2, pos an involution without fixed points, labels
    // shared within a pair and distinct across pairs.
    void validate() const;

    // Rows (2p, 2p + 1) form pair p.
    static Pairing interleaved(const std::vector<Label>& pair_labels);
};

struct PairedBatch {
    Matrix z;
    Pairing pairing;

    void validate() const;
};

struct DistanceMatrix {
    Matrix d;
    Metric metric = Metric::cosine;
    double c = 0.0;  // curvature used by the hyperbolic part, 0 for cosine
};

struct LossConfig {
    double tau = 0.2;
    double lambda = 3.0;
    LossMode mode = LossMode::hyperbolic;
    double combo_weight = 0.5;  // convex_combo only: weight of the hyperbolic loss

    void validate() const;
};

struct TripletWeightMatrix {
    Matrix p_neg;  // p_neg(i, k), zero for k in {i, pos(i)}
    Vector p_pos;
};

/// Pairwise distances between the rows of z. For Metric::hyperbolic the rows
/// must already be ball points. Errors carry the offending row indices.
DistanceMatrix distance_matrix(const Matrix& z, Metric metric, const BallConfig& cfg);
DistanceMatrix distance_matrix(const PairedBatch& batch, Metric metric, const BallConfig& cfg);

/// D_cos(ze) + lambda * D_hyp(zh), zh given as ball points.
DistanceMatrix fused_distance_matrix(const Matrix& ze, const Matrix& zh, double lambda, const BallConfig& cfg);

/// Per-anchor terms -log softmax_pos of the pairwise cross-entropy.
Vector pairwise_ce_terms(const DistanceMatrix& dist, const Pairing& pairing, double tau);

double pairwise_ce_loss(const DistanceMatrix& dist, const Pairing& pairing, double tau);

/// Similarity form: logits z_i . z_j / tau on unit-normalized rows.
/// infonce_loss(b, tau / 2) equals pairwise_ce_loss on cosine distances at tau.
double infonce_loss(const PairedBatch& batch, double tau);

TripletWeightMatrix triplet_weights(const DistanceMatrix& dist, const Pairing& pairing, double tau);

/// Pairwise cross-entropy on the fused distance D_cos + lambda * D_hyp.
double mix_loss(const Matrix& zcos, const Matrix& zhyp, const Pairing& pairing, double tau, double lambda,
                const BallConfig& cfg);

/// w * l_hyp + (1 - w) * l_nce.
double convex_combo_loss(double l_hyp, double l_nce, double w);

}  // namespace gyro
