#include "gyro/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <fmt/format.h>

namespace gyro {

namespace {

// Strict (distance, index) order used by every ranking.
struct Ranked {
    double d;
    std::size_t idx;
    bool operator<(const Ranked& o) const { return d < o.d || (d == o.d && idx < o.idx); }
};

void check_square(const Matrix& dist, std::size_t labels) {
    if (dist.rows() != dist.cols() || static_cast<std::size_t>(dist.rows()) != labels) {
        throw InvalidArgument("distances", fmt::format("expected a {}x{} matrix, got {}x{}", labels, labels,
                                                       dist.rows(), dist.cols()));
    }
    if (!dist.allFinite()) throw NumericError("distance matrix contains non-finite values");
}

std::ofstream open_csv(const std::filesystem::path& path, std::string_view header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    out << header << '\n';
    return out;
}

std::string join_indices(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ";")); }

}  // namespace

RetrievalReport recall_at_k(const Matrix& dist, const std::vector<Label>& labels, const std::vector<std::size_t>& ks,
                            const std::string& metric_tag) {
    const std::size_t m = labels.size();
    if (m < 2) throw InvalidArgument("data", "retrieval needs at least 2 samples");
    check_square(dist, m);
    if (ks.empty()) throw InvalidArgument("k", "empty K list");
    for (std::size_t k : ks) {
        if (k < 1) throw InvalidArgument("k", "K must be >= 1");
        if (k >= m) throw InvalidArgument("k", fmt::format("K = {} must be smaller than the sample count {}", k, m));
    }

    // Rank of the best same-label neighbor among all other samples; a query
    // scores at K when that rank is below K.
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> first_hit(m, kNone);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        std::optional<Ranked> best;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i || labels[j] != labels[i]) continue;
            const Ranked cand{dist(row, static_cast<Eigen::Index>(j)), j};
            if (!best || cand < *best) best = cand;
        }
        if (!best) continue;
        std::size_t rank = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j != i && Ranked{dist(row, static_cast<Eigen::Index>(j)), j} < *best) ++rank;
        }
        first_hit[i] = rank;
    }

    RetrievalReport report{metric_tag, ks, {}, m};
    for (std::size_t k : ks) {
        const auto hits = std::count_if(first_hit.begin(), first_hit.end(), [k](std::size_t r) { return r < k; });
        report.recall.push_back(static_cast<double>(hits) / static_cast<double>(m));
    }
    return report;
}

Matrix retrieval_distances(const Matrix& ze, const Matrix& zh, Metric metric, double lambda, const BallConfig& cfg) {
    switch (metric) {
        case Metric::cosine:
            return distance_matrix(ze, Metric::cosine, cfg).d;
        case Metric::hyperbolic:
            return distance_matrix(zh, Metric::hyperbolic, cfg).d;
        case Metric::mixed:
            return fused_distance_matrix(ze, zh, lambda, cfg).d;
    }
    throw InvalidArgument("metric", "unknown metric");
}

Matrix mode_distances(const Matrix& ze, const Matrix& zh, const LossConfig& loss, const BallConfig& cfg) {
    switch (loss.mode) {
        case LossMode::euclidean:
            return retrieval_distances(ze, zh, Metric::cosine, 0.0, cfg);
        case LossMode::hyperbolic:
            return retrieval_distances(ze, zh, Metric::hyperbolic, 0.0, cfg);
        case LossMode::mixed:
            return retrieval_distances(ze, zh, Metric::mixed, loss.lambda, cfg);
        case LossMode::convex_combo:
            return loss.combo_weight * distance_matrix(zh, Metric::hyperbolic, cfg).d +
                   (1.0 - loss.combo_weight) * distance_matrix(ze, Metric::cosine, cfg).d;
    }
    throw InvalidArgument("loss.mode", "unknown mode");
}

RetrievalReport recall_at_k(const Matrix& z, const std::vector<Label>& labels, const std::vector<std::size_t>& ks,
                            Metric metric, const BallConfig& cfg) {
    if (metric == Metric::mixed) {
        throw InvalidArgument("metric", "mixed retrieval needs both branches; use retrieval_distances");
    }
    return recall_at_k(distance_matrix(z, metric, cfg).d, labels, ks, to_string(metric));
}

std::vector<std::size_t> hard_negatives(std::size_t anchor, const Matrix& dist, const std::vector<Label>& labels,
                                        std::size_t m) {
    check_square(dist, labels.size());
    if (anchor >= labels.size()) throw InvalidArgument("anchor", "index out of range");
    std::vector<Ranked> negatives;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] != labels[anchor]) {
            negatives.push_back({dist(static_cast<Eigen::Index>(anchor), static_cast<Eigen::Index>(j)), j});
        }
    }
    if (m < 1 || m > negatives.size()) {
        throw InvalidArgument("m", fmt::format("m = {} but anchor {} has {} negatives", m, anchor, negatives.size()));
    }
    std::partial_sort(negatives.begin(), negatives.begin() + static_cast<long>(m), negatives.end());
    std::vector<std::size_t> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = negatives[i].idx;
    return out;
}

OverlapReport overlap_report(const Matrix& z_e, const Matrix& z_h, const std::vector<Label>& labels, std::size_t m,
                             const BallConfig& cfg) {
    if (static_cast<std::size_t>(z_e.rows()) != labels.size() || static_cast<std::size_t>(z_h.rows()) != labels.size()) {
        throw InvalidArgument("embeddings", "Z_e, Z_h and labels must have the same length");
    }
    std::map<Label, std::size_t> counts;
    for (Label l : labels) ++counts[l];
    for (const auto& [label, count] : counts) {
        const std::size_t negatives = labels.size() - count;
        if (m < 1 || m > negatives) {
            throw InvalidArgument("m", fmt::format("m = {} but class {} has only {} negatives", m, label, negatives));
        }
    }
    const Matrix de = distance_matrix(z_e, Metric::cosine, cfg).d;
    const Matrix dh = distance_matrix(z_h, Metric::hyperbolic, cfg).d;

    OverlapReport report;
    report.m = m;
    double total = 0.0;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        AnchorOverlap ov;
        ov.anchor = a;
        ov.top_e = hard_negatives(a, de, labels, m);
        ov.top_h = hard_negatives(a, dh, labels, m);
        std::vector<std::size_t> se = ov.top_e;
        std::vector<std::size_t> sh = ov.top_h;
        std::sort(se.begin(), se.end());
        std::sort(sh.begin(), sh.end());
        std::set_difference(se.begin(), se.end(), sh.begin(), sh.end(), std::back_inserter(ov.only_e));
        std::set_difference(sh.begin(), sh.end(), se.begin(), se.end(), std::back_inserter(ov.only_h));
        const std::size_t common = m - ov.only_e.size();
        ov.jaccard = static_cast<double>(common) / static_cast<double>(common + ov.only_e.size() + ov.only_h.size());
        total += ov.jaccard;
        if (!ov.only_e.empty()) ++report.anchors_with_difference;
        report.anchors.push_back(std::move(ov));
    }
    report.mean_jaccard = total / static_cast<double>(labels.size());
    return report;
}

PProfile p_profile(const DistanceMatrix& dist, const Pairing& pairing, double tau) {
    const TripletWeightMatrix w = triplet_weights(dist, pairing, tau);
    PProfile out{{}, w.p_pos, tau};
    for (std::size_t i = 0; i < pairing.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        std::vector<Ranked> negs;
        for (std::size_t k = 0; k < pairing.size(); ++k) {
            if (pairing.is_negative(i, k)) negs.push_back({dist.d(row, static_cast<Eigen::Index>(k)), k});
        }
        std::sort(negs.begin(), negs.end());
        for (std::size_t r = 0; r < negs.size(); ++r) {
            out.rows.push_back({i, r, negs[r].idx, negs[r].d, w.p_neg(row, static_cast<Eigen::Index>(negs[r].idx))});
        }
    }
    return out;
}

Vector max_p_per_anchor(const PProfile& profile, std::size_t anchors) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(anchors));
    for (const PProfileRow& row : profile.rows) {
        auto& v = out(static_cast<Eigen::Index>(row.anchor));
        v = std::max(v, row.p);
    }
    return out;
}

void SweepGrid::validate() const {
    if (modes.empty()) throw InvalidArgument("sweep.modes", "empty list");
    if (taus.empty()) throw InvalidArgument("sweep.tau", "empty list");
    if (cs.empty()) throw InvalidArgument("sweep.c", "empty list");
    if (lambdas.empty()) throw InvalidArgument("sweep.lambda", "empty list");
}

double heldout_recall1(const TrainResult& trained, const Dataset& eval_split, const TrainConfig& cfg) {
    const auto [ze, zh] = embed(trained.params, eval_split.x, cfg.ball);
    return recall_at_k(mode_distances(ze, zh, cfg.loss, cfg.ball), eval_split.y, {1}, to_string(cfg.loss.mode))
        .recall.front();
}

SweepReport sweep(const Dataset& ds, const TrainConfig& base, const SweepGrid& grid, std::uint64_t seed,
                  unsigned threads) {
    grid.validate();
    SweepReport report;
    report.seed = seed;
    std::vector<TrainConfig> configs;
    for (LossMode mode : grid.modes) {
        for (double tau : grid.taus) {
            for (double c : grid.cs) {
                for (double lambda : grid.lambdas) {
                    TrainConfig cfg = base;
                    cfg.loss.mode = mode;
                    cfg.loss.tau = tau;
                    cfg.ball.c = c;
                    cfg.loss.lambda = lambda;
                    cfg.seed = seed + configs.size();
                    cfg.validate();  // a bad grid value aborts before any training
                    SweepCell cell;
                    cell.mode = mode;
                    cell.tau = tau;
                    cell.c = c;
                    cell.lambda = lambda;
                    cell.seed = cfg.seed;
                    report.cells.push_back(cell);
                    configs.push_back(cfg);
                }
            }
        }
    }
    const auto [train_split, eval_split] = split_disjoint_classes(ds);

    auto run_cell = [&](std::size_t i) {
        SweepCell& cell = report.cells[i];
        const auto start = std::chrono::steady_clock::now();
        try {
            const TrainResult r = train(train_split, configs[i]);
            const std::size_t tail = std::min<std::size_t>(10, r.loss_trace.size());
            double sum = 0.0;
            for (std::size_t s = r.loss_trace.size() - tail; s < r.loss_trace.size(); ++s) sum += r.loss_trace[s];
            cell.loss = sum / static_cast<double>(tail);
            cell.recall1 = heldout_recall1(r, eval_split, configs[i]);
        } catch (const NumericError& e) {
            cell.status = "diverged";
            cell.message = e.what();
        } catch (const std::exception& e) {
            cell.status = "error";
            cell.message = e.what();
        }
        cell.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), configs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < configs.size(); ++i) run_cell(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < configs.size(); i = next++) run_cell(i);
            });
        }
        for (auto& t : pool) t.join();
    }
    return report;
}

void write_recall_csv(const RetrievalReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path, "metric,k,recall");
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        out << fmt::format("{},{},{}\n", report.metric, report.ks[i], report.recall[i]);
    }
}

void write_p_profile_csv(const PProfile& profile, const std::filesystem::path& path) {
    auto out = open_csv(path, "anchor,rank,distance,p");
    for (const PProfileRow& r : profile.rows) out << fmt::format("{},{},{},{}\n", r.anchor, r.rank, r.distance, r.p);
}

void write_overlap_csv(const OverlapReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path, "anchor,jaccard,only_e,only_h");
    for (const AnchorOverlap& a : report.anchors) {
        out << fmt::format("{},{},{},{}\n", a.anchor, a.jaccard, join_indices(a.only_e), join_indices(a.only_h));
    }
}

void write_sweep_csv(const SweepReport& report, const std::filesystem::path& path) {
    auto out = open_csv(path, "mode,tau,c,lambda,recall1,loss,status");
    for (const SweepCell& c : report.cells) {
        out << fmt::format("{},{},{},{},{},{},{}\n", to_string(c.mode), c.tau, c.c, c.lambda, c.recall1, c.loss,
                           c.status);
    }
}

void write_trace_csv(const TrainResult& result, const std::filesystem::path& path) {
    auto out = open_csv(path, "step,loss,grad_norm");
    for (std::size_t s = 0; s < result.loss_trace.size(); ++s) {
        out << fmt::format("{},{},{}\n", s, result.loss_trace[s], result.grad_norms[s]);
    }
}

}  // namespace gyro
