#pragma once

// Retrieval metrics, hard-negative and overlap reports, p(x-) profiles and
// the hyperparameter sweep harness. Neighbor rankings order candidates by
// (distance, index), so ties always go to the lower index.

#include <filesystem>
#include <optional>

#include "gyro/dataset.hpp"
#include "gyro/training.hpp"

namespace gyro {

struct RetrievalReport {
    std::string metric;
    std::vector<std::size_t> ks;
    std::vector<double> recall;  // recall[i] belongs to ks[i]
    std::size_t queries = 0;
};

/// Recall@K from a full M x M distance matrix (diagonal ignored). Every
/// K must satisfy 1 <= K < M.
RetrievalReport recall_at_k(const Matrix& dist, const std::vector<Label>& labels, const std::vector<std::size_t>& ks,
                            const std::string& metric_tag);

/// Distances used for retrieval: cosine on ze, hyperbolic on the ball points
/// zh, or D_cos + lambda * D_hyp for Metric::mixed.
Matrix retrieval_distances(const Matrix& ze, const Matrix& zh, Metric metric, double lambda, const BallConfig& cfg);

/// Distance matched to a training mode; convex_combo uses
/// w * D_hyp + (1 - w) * D_cos with the loss combo weight.
Matrix mode_distances(const Matrix& ze, const Matrix& zh, const LossConfig& loss, const BallConfig& cfg);

/// Recall@K of embeddings z (ball points for Metric::hyperbolic).
RetrievalReport recall_at_k(const Matrix& z, const std::vector<Label>& labels, const std::vector<std::size_t>& ks,
                            Metric metric, const BallConfig& cfg);

/// The m nearest samples with a label different from the anchor's, by
/// ascending (distance, index).
std::vector<std::size_t> hard_negatives(std::size_t anchor, const Matrix& dist, const std::vector<Label>& labels,
                                        std::size_t m);

struct AnchorOverlap {
    std::size_t anchor = 0;
    std::vector<std::size_t> top_e;   // under cosine distance on Z_e
    std::vector<std::size_t> top_h;   // under hyperbolic distance on Z_h
    std::vector<std::size_t> only_e;  // sorted ascending
    std::vector<std::size_t> only_h;  // sorted ascending
    double jaccard = 1.0;
};

struct OverlapReport {
    std::size_t m = 0;
    std::vector<AnchorOverlap> anchors;
    double mean_jaccard = 1.0;
    std::size_t anchors_with_difference = 0;
};

/// Per-anchor top-m hard negatives under both geometries. z_h holds ball
/// points. m must not exceed any anchor's negative count.
OverlapReport overlap_report(const Matrix& z_e, const Matrix& z_h, const std::vector<Label>& labels, std::size_t m,
                             const BallConfig& cfg);

struct PProfileRow {
    std::size_t anchor = 0;
    std::size_t rank = 0;  // 0 = closest negative
    std::size_t negative = 0;
    double distance = 0.0;
    double p = 0.0;
};

struct PProfile {
    std::vector<PProfileRow> rows;  // grouped by anchor, ascending distance within
    Vector p_pos;
    double tau = 0.0;
};

/// Triplet weights of every anchor's negatives sorted by ascending distance.
PProfile p_profile(const DistanceMatrix& dist, const Pairing& pairing, double tau);

/// Largest negative weight per anchor.
Vector max_p_per_anchor(const PProfile& profile, std::size_t anchors);

struct SweepGrid {
    std::vector<LossMode> modes;
    std::vector<double> taus;
    std::vector<double> cs;
    std::vector<double> lambdas;

    std::size_t size() const { return modes.size() * taus.size() * cs.size() * lambdas.size(); }
    void validate() const;
};

struct SweepCell {
    LossMode mode = LossMode::hyperbolic;
    double tau = 0.0;
    double c = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double recall1 = std::numeric_limits<double>::quiet_NaN();
    double loss = std::numeric_limits<double>::quiet_NaN();  // mean of the last 10 trace values
    std::string status = "ok";                                // ok | diverged | error
    std::string message;
    double runtime_s = 0.0;
};

struct SweepReport {
    std::vector<SweepCell> cells;  // mode-major, then tau, c, lambda
    std::uint64_t seed = 0;
};

/// Evaluation protocol shared by sweeps and the train+eval composition:
/// trains on the first half of the classes, embeds the second half and
/// returns Recall@1 under mode_distances.
double heldout_recall1(const TrainResult& trained, const Dataset& eval_split, const TrainConfig& cfg);

/// One model per cell, cell i seeded with seed + i. Cell failures are
/// recorded in the cell; cells run on up to `threads` workers (0 or 1 means
/// sequential) and the report does not depend on the worker count.
SweepReport sweep(const Dataset& ds, const TrainConfig& base, const SweepGrid& grid, std::uint64_t seed,
                  unsigned threads = 1);

// CSV writers with fixed column order. Numbers use the shortest
// representation that round-trips.
void write_recall_csv(const RetrievalReport& report, const std::filesystem::path& path);
void write_p_profile_csv(const PProfile& profile, const std::filesystem::path& path);
void write_overlap_csv(const OverlapReport& report, const std::filesystem::path& path);
void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path);
void write_trace_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace gyro
