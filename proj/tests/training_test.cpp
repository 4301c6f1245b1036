#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "gyro/config_io.hpp"
#include "gyro/grad.hpp"
#include "gyro/training.hpp"
#include "test_support.hpp"

using namespace gyro;
using gyro::testing::random_matrix;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "gyro_training_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

// Classes 0..classes-1 with `per_class` rows each, random features.
Dataset random_dataset(std::mt19937_64& rng, std::size_t classes, std::size_t per_class, Eigen::Index dim) {
    std::vector<Label> y;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) y.push_back(static_cast<Label>(c));
    }
    return Dataset(random_matrix(rng, static_cast<Eigen::Index>(y.size()), dim), y);
}

double mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    return std::accumulate(v.begin() + static_cast<long>(begin), v.begin() + static_cast<long>(end), 0.0) /
           static_cast<double>(end - begin);
}

Dataset blobs(std::size_t classes, std::uint64_t seed) {
    SynthConfig s;
    s.depth = 1;
    s.leaf_classes = classes;
    s.samples_per_class = 30;
    s.dim = 8;
    s.noise = 0.5;
    std::mt19937_64 rng(seed);
    return synth_hierarchy(s, rng);
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.classes_per_batch = 4;
    cfg.steps = 200;
    cfg.seed = 7;
    cfg.model.hidden = 32;
    cfg.model.embed = 16;
    cfg.model.out = 8;
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Sampler

TEST(SampleBatch, TwoClassesFromFive) {
    std::mt19937_64 rng(1);
    const Dataset ds = random_dataset(rng, 5, 4, 3);
    const BatchIndices b = sample_batch(ds, 2, rng);
    ASSERT_EQ(b.rows.size(), 4u);
    EXPECT_NO_THROW(b.pairing.validate());
    std::set<Label> labels;
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(ds.y[b.rows[i]], b.pairing.labels[i]);
        labels.insert(ds.y[b.rows[i]]);
    }
    EXPECT_EQ(labels.size(), 2u);
}

TEST(SampleBatch, ContractHoldsOnEveryDraw) {
    std::mt19937_64 rng(2);
    // Uneven class sizes including singletons, which may never be drawn.
    std::vector<Label> y;
    for (Label c = 0; c < 12; ++c) {
        const std::size_t count = static_cast<std::size_t>(c % 4);  // 0..3 rows
        for (std::size_t s = 0; s < count; ++s) y.push_back(c);
    }
    const Dataset ds(random_matrix(rng, static_cast<Eigen::Index>(y.size()), 2), y);
    for (int draw = 0; draw < 500; ++draw) {
        const std::size_t n = 2 + static_cast<std::size_t>(draw % 5);
        const BatchIndices b = sample_batch(ds, n, rng);
        ASSERT_EQ(b.rows.size(), 2 * n);
        ASSERT_NO_THROW(b.pairing.validate());
        for (std::size_t i = 0; i < b.rows.size(); ++i) {
            const std::size_t partner = b.pairing.pos[i];
            EXPECT_NE(b.rows[i], b.rows[partner]);
            EXPECT_EQ(ds.y[b.rows[i]], ds.y[b.rows[partner]]);
            EXPECT_GE(ds.class_index.at(ds.y[b.rows[i]]).size(), 2u);
        }
    }
}

TEST(SampleBatch, DeterministicUnderSeed) {
    std::mt19937_64 data_rng(3);
    const Dataset ds = random_dataset(data_rng, 10, 5, 2);
    std::mt19937_64 a(99);
    std::mt19937_64 b(99);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_batch(ds, 4, a).rows, sample_batch(ds, 4, b).rows);
}

TEST(SampleBatch, TooFewClassesIsAnError) {
    std::mt19937_64 rng(4);
    const Dataset ds = random_dataset(rng, 2, 5, 2);
    EXPECT_THROW(sample_batch(ds, 3, rng), InvalidArgument);
    // Classes with a single row do not count.
    const Dataset thin(random_matrix(rng, 3, 2), {0, 0, 1});
    EXPECT_THROW(sample_batch(thin, 2, rng), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Encoder

TEST(Encoder, ZeroTrunkFallsBackToFirstBasisVector) {
    EncoderShape shape{4, 5, 3, 2, false};
    EncoderParams p(shape);
    std::mt19937_64 rng(5);
    p.head_e = random_matrix(rng, 2, 3);
    p.head_h = random_matrix(rng, 2, 3);
    p.bias_e = Vector::Constant(2, 0.5);
    const EncoderForward f = encode(p, random_matrix(rng, 6, 4));
    for (Eigen::Index i = 0; i < 6; ++i) {
        EXPECT_EQ(f.unit.row(i), Eigen::RowVector3d(1, 0, 0));
        EXPECT_TRUE((f.ze.row(i).transpose() - (p.head_e.col(0) + p.bias_e)).isZero(0.0));
        EXPECT_TRUE((f.zh_pre.row(i).transpose() - p.head_h.col(0)).isZero(0.0));
    }
    // The fallback is constant, so no gradient reaches the trunk.
    const Vector g = encoder_backward(p, random_matrix(rng, 6, 4), f, random_matrix(rng, 6, 2), random_matrix(rng, 6, 2));
    EXPECT_TRUE(g.allFinite());
    EXPECT_EQ(g.head(p.w1.size() + p.b1.size() + p.w2.size() + p.b2.size()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, IdentityLikeTrunkPassesUnitInputsThrough) {
    const double eps = 1e-4;
    EncoderShape shape{3, 3, 3, 3, false};
    EncoderParams p(shape);
    p.w1 = eps * Matrix::Identity(3, 3);
    p.w2 = Matrix::Identity(3, 3) / eps;  // undoes the small-signal tanh
    p.head_e = Matrix::Identity(3, 3);
    p.head_h = Matrix::Identity(3, 3);
    std::mt19937_64 rng(6);
    Matrix x = random_matrix(rng, 10, 3);
    x.rowwise().normalize();
    const EncoderForward f = encode(p, x);
    EXPECT_LT((f.ze - x).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LT((f.zh_pre - x).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Encoder, RandomParamsGiveFiniteOutputsInsideBall) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        EncoderShape shape{6, 10, 5, 4, trial % 2 == 1};
        EncoderParams p = init_encoder(shape, rng);
        // Scale some parameters wildly to stress the normalization guard.
        Vector flat = p.flatten();
        std::uniform_real_distribution<double> pick(-8.0, 8.0);
        for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) *= std::pow(10.0, pick(rng));
        p.assign(flat);
        const Matrix x = random_matrix(rng, 12, 6, 3.0);
        for (double c : {0.1, 1.0}) {
            BallConfig cfg;
            cfg.c = c;
            const auto [ze, zh] = embed(p, x, cfg);
            ASSERT_TRUE(ze.allFinite());
            ASSERT_TRUE(zh.allFinite());
            for (Eigen::Index i = 0; i < zh.rows(); ++i) EXPECT_LT(std::sqrt(c) * zh.row(i).norm(), 1.0);
        }
    }
}

TEST(Encoder, HeadsAreOrthonormal) {
    std::mt19937_64 rng(8);
    const EncoderParams p = init_encoder({5, 8, 12, 4, false}, rng);
    EXPECT_TRUE((p.head_e * p.head_e.transpose()).isIdentity(1e-12));
    EXPECT_TRUE((p.head_h * p.head_h.transpose()).isIdentity(1e-12));
    EXPECT_EQ(p.bias_e.cwiseAbs().maxCoeff(), 0.0);
    const EncoderParams wide = init_encoder({5, 8, 3, 6, true}, rng);
    EXPECT_TRUE((wide.head_e.transpose() * wide.head_e).isIdentity(1e-12));
    EXPECT_EQ(wide.head_h.size(), 0);
}

TEST(Encoder, FlattenAssignRoundTrip) {
    std::mt19937_64 rng(9);
    EncoderParams p = init_encoder({3, 4, 5, 2, false}, rng);
    const Vector flat = p.flatten();
    EXPECT_EQ(flat.size(), 4 * 3 + 4 + 5 * 4 + 5 + 2 * 5 + 2 + 2 * 5 + 2);
    EncoderParams q(p.shape);
    q.assign(flat);
    EXPECT_EQ(q.flatten(), flat);
    EXPECT_THROW(q.assign(Vector::Zero(3)), InvalidArgument);
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
    std::mt19937_64 rng(10);
    for (bool shared : {false, true}) {
        EncoderParams p = init_encoder({4, 6, 5, 3, shared}, rng);
        p.b1 = gyro::testing::random_vector(rng, 6, 0.3);
        p.b2 = gyro::testing::random_vector(rng, 5, 0.3);
        const Matrix x = random_matrix(rng, 7, 4);
        const Matrix ge = random_matrix(rng, 7, 3);
        const Matrix gh = random_matrix(rng, 7, 3);
        auto fn = [&](const Vector& flat) {
            EncoderParams q(p.shape);
            q.assign(flat);
            const EncoderForward f = encode(q, x);
            return (f.ze.array() * ge.array()).sum() + (f.zh_pre.array() * gh.array()).sum();
        };
        const Vector analytic = encoder_backward(p, x, encode(p, x), ge, gh);
        const GradientReport r = compare_gradients(analytic, fd_gradient(fn, p.flatten()));
        EXPECT_LT(r.max_rel_err, 1e-6) << "shared=" << shared;
    }
}

TEST(Encoder, LossGradientWithRespectToParams) {
    std::mt19937_64 rng(11);
    const Pairing pairing = gyro::testing::make_pairing(3);
    for (LossMode mode : {LossMode::euclidean, LossMode::hyperbolic, LossMode::mixed, LossMode::convex_combo}) {
        EncoderParams p = init_encoder({4, 6, 5, 3, false}, rng);
        const Matrix x = random_matrix(rng, 6, 4);
        LossConfig loss;
        loss.mode = mode;
        const BallConfig ball;
        auto fn = [&](const Vector& flat) {
            EncoderParams q(p.shape);
            q.assign(flat);
            return batch_loss_grad(q, x, pairing, loss, ball).loss;
        };
        const ParamLossGrad lg = batch_loss_grad(p, x, pairing, loss, ball);
        const GradientReport r = compare_gradients(lg.grad, fd_gradient(fn, p.flatten()));
        EXPECT_LT(r.max_rel_err, 1e-5) << to_string(mode);
    }
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Optimizer, FirstAdaptiveStepMatchesHandComputation) {
    OptimizerConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    Optimizer opt(cfg);
    Vector p(3);
    p << 1.0, -2.0, 0.5;
    Vector g(3);
    g << 0.3, -4.0, 0.0;
    const Vector p0 = p;
    opt.step(p, g);
    for (Eigen::Index i = 0; i < 3; ++i) {
        // m_hat = g, v_hat = g^2 after one bias-corrected step.
        const double expected = p0(i) * (1.0 - 0.01 * 0.1) - 0.01 * g(i) / (std::abs(g(i)) + 1e-8);
        EXPECT_NEAR(p(i), expected, 1e-15);
    }
}

TEST(Optimizer, SgdIsPlainGradientStep) {
    OptimizerConfig cfg;
    cfg.kind = OptimizerKind::sgd;
    cfg.lr = 0.5;
    Optimizer opt(cfg);
    Vector p = Vector::Ones(2);
    opt.step(p, Vector::Constant(2, 2.0));
    EXPECT_EQ(p, Vector::Zero(2));
}

TEST(Optimizer, ParseNames) {
    EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::sgd);
    EXPECT_EQ(parse_optimizer("adaptive"), OptimizerKind::adaptive);
    EXPECT_THROW(parse_optimizer("adam9"), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Training loop

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
    const Dataset ds = blobs(4, 12);
    for (OptimizerKind kind : {OptimizerKind::adaptive, OptimizerKind::sgd}) {
        TrainConfig cfg = small_config();
        cfg.steps = 20;
        cfg.optimizer.kind = kind;
        cfg.optimizer.lr = 0.0;
        const TrainResult r = train(ds, cfg);
        const EncoderParams init = initial_params(cfg, ds.dim());
        EXPECT_EQ(r.params.flatten(), init.flatten());

        // The trace is the frozen model's loss on the replayed batches.
        std::mt19937_64 rng(cfg.seed);
        EncoderShape shape = cfg.model;
        shape.input_dim = ds.dim();
        init_encoder(shape, rng);
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            const BatchIndices b = sample_batch(ds, cfg.classes_per_batch, rng);
            Matrix x(static_cast<Eigen::Index>(b.rows.size()), ds.dim());
            for (std::size_t i = 0; i < b.rows.size(); ++i) {
                x.row(static_cast<Eigen::Index>(i)) = ds.x.row(static_cast<Eigen::Index>(b.rows[i]));
            }
            EXPECT_EQ(r.loss_trace[step], batch_loss_grad(init, x, b.pairing, cfg.loss, cfg.ball).loss);
        }
    }
}

TEST(Train, CosineSmokeRunImproves) {
    const Dataset ds = blobs(4, 13);
    TrainConfig cfg = small_config();
    cfg.loss.mode = LossMode::euclidean;
    cfg.loss.tau = 0.05;
    const TrainResult r = train(ds, cfg);
    ASSERT_EQ(r.loss_trace.size(), 200u);
    EXPECT_LT(mean(r.loss_trace, 190, 200), mean(r.loss_trace, 0, 10));
}

TEST(Train, HyperbolicSmokeRunImproves) {
    const Dataset ds = blobs(4, 14);
    TrainConfig cfg = small_config();
    cfg.loss.mode = LossMode::hyperbolic;
    cfg.loss.tau = 0.2;
    cfg.ball.c = 0.1;
    const TrainResult r = train(ds, cfg);
    EXPECT_LT(mean(r.loss_trace, 190, 200), mean(r.loss_trace, 0, 10));
}

TEST(Train, ClippedNormNeverExceedsBound) {
    const Dataset ds = blobs(6, 15);
    for (double clip : {3.0, 0.05}) {
        TrainConfig cfg = small_config();
        cfg.steps = 60;
        cfg.grad_clip = clip;
        cfg.loss.mode = LossMode::mixed;
        cfg.loss.tau = 0.05;
        const TrainResult r = train(ds, cfg);
        bool clipped_somewhere = false;
        for (std::size_t s = 0; s < r.clipped_norms.size(); ++s) {
            EXPECT_LE(r.clipped_norms[s], clip + 1e-9);
            clipped_somewhere = clipped_somewhere || r.grad_norms[s] > clip;
        }
        if (clip < 1.0) EXPECT_TRUE(clipped_somewhere);
    }
}

TEST(Train, DeterministicTraces) {
    const Dataset ds = blobs(5, 16);
    TrainConfig cfg = small_config();
    cfg.steps = 50;
    cfg.loss.mode = LossMode::convex_combo;
    const TrainResult a = train(ds, cfg);
    const TrainResult b = train(ds, cfg);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
    EXPECT_EQ(a.params.flatten(), b.params.flatten());
    cfg.seed += 1;
    EXPECT_NE(train(ds, cfg).loss_trace, a.loss_trace);
}

TEST(Train, HyperbolicOutputsStayInsideBallUnderPressure) {
    const Dataset ds = blobs(4, 17);
    TrainConfig cfg = small_config();
    cfg.steps = 100;
    cfg.optimizer.lr = 0.1;  // aggressive on purpose
    cfg.ball.c = 1.0;
    cfg.loss.tau = 0.05;
    const TrainResult r = train(ds, cfg);
    const auto [ze, zh] = embed(r.params, ds.x, cfg.ball);
    for (Eigen::Index i = 0; i < zh.rows(); ++i) EXPECT_LT(zh.row(i).norm(), 1.0);
}

TEST(Train, DivergenceReportsStep) {
    const Dataset ds = blobs(4, 18);
    TrainConfig cfg = small_config();
    cfg.optimizer.kind = OptimizerKind::sgd;
    cfg.optimizer.lr = 1e308;
    cfg.grad_clip = 1e300;
    try {
        train(ds, cfg);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step "), std::string::npos) << e.what();
    }
}

TEST(Train, ConfigValidation) {
    const Dataset ds = blobs(4, 19);
    TrainConfig cfg = small_config();
    cfg.classes_per_batch = 1;
    EXPECT_THROW(train(ds, cfg), InvalidArgument);
    cfg = small_config();
    cfg.steps = 0;
    EXPECT_THROW(train(ds, cfg), InvalidArgument);
    cfg = small_config();
    cfg.optimizer.lr = -1.0;
    EXPECT_THROW(train(ds, cfg), InvalidArgument);
    cfg = small_config();
    cfg.classes_per_batch = 5;  // only 4 classes
    EXPECT_THROW(train(ds, cfg), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Synthetic data

TEST(Synth, DepthOneIsPlainBlobs) {
    SynthConfig s;
    s.depth = 1;
    s.leaf_classes = 5;
    s.samples_per_class = 7;
    s.dim = 3;
    s.noise = 0.0;
    s.variation_rank = 0;
    std::mt19937_64 rng(20);
    const Dataset ds = synth_hierarchy(s, rng);
    EXPECT_EQ(ds.size(), 35u);
    EXPECT_EQ(ds.classes().size(), 5u);
    // noise 0: every sample sits on its class center.
    for (const auto& [label, rows] : ds.class_index) {
        for (std::size_t r : rows) EXPECT_EQ(ds.x.row(static_cast<Eigen::Index>(r)), ds.x.row(static_cast<Eigen::Index>(rows[0])));
    }
    // Centers are distinct.
    EXPECT_NE(ds.x.row(0), ds.x.row(7));
}

TEST(Synth, HierarchySiblingsAreCloserThanCousins) {
    SynthConfig s;
    s.depth = 3;
    s.branching = 2;
    s.leaf_classes = 4;  // one leaf per level-2 node
    s.samples_per_class = 1;
    s.noise = 0.0;
    s.variation_rank = 0;
    s.dim = 64;
    double sib = 0.0;
    double cousin = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        const Dataset ds = synth_hierarchy(s, rng);
        // Leaves 0, 1 share a level-1 parent; 2, 3 share the other one.
        sib += (ds.x.row(0) - ds.x.row(1)).norm() + (ds.x.row(2) - ds.x.row(3)).norm();
        cousin += (ds.x.row(0) - ds.x.row(2)).norm() + (ds.x.row(1) - ds.x.row(3)).norm();
    }
    EXPECT_LT(sib, cousin);
}

TEST(Synth, DeterministicBytewise) {
    const SynthConfig s;
    std::mt19937_64 a(21);
    std::mt19937_64 b(21);
    const Dataset da = synth_hierarchy(s, a);
    const Dataset db = synth_hierarchy(s, b);
    ASSERT_EQ(da.size(), 800u);
    EXPECT_EQ(da.dim(), 16);
    EXPECT_EQ(da.classes().size(), 16u);
    EXPECT_EQ(std::memcmp(da.x.data(), db.x.data(), sizeof(double) * static_cast<std::size_t>(da.x.size())), 0);
    EXPECT_EQ(da.y, db.y);
}

TEST(Synth, RejectsNonPositiveSizes) {
    std::mt19937_64 rng(22);
    SynthConfig s;
    s.leaf_classes = 0;
    EXPECT_THROW(synth_hierarchy(s, rng), InvalidArgument);
    s = SynthConfig{};
    s.noise = -1.0;
    EXPECT_THROW(synth_hierarchy(s, rng), InvalidArgument);
    s = SynthConfig{};
    s.variation_rank = s.dim + 1;
    EXPECT_THROW(synth_hierarchy(s, rng), InvalidArgument);
    s = SynthConfig{};
    s.variation_scale = -0.5;
    EXPECT_THROW(synth_hierarchy(s, rng), InvalidArgument);
}

TEST(Synth, VariationIsConfinedToRankDirections) {
    SynthConfig s;
    s.leaf_classes = 3;
    s.samples_per_class = 40;
    s.noise = 0.0;
    s.variation_rank = 2;
    std::mt19937_64 rng(23);
    const Dataset ds = synth_hierarchy(s, rng);
    for (const auto& [label, rows] : ds.class_index) {
        Matrix centered(static_cast<Eigen::Index>(rows.size()), ds.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            centered.row(static_cast<Eigen::Index>(i)) = ds.x.row(static_cast<Eigen::Index>(rows[i]));
        }
        centered.rowwise() -= centered.colwise().mean();
        const Eigen::JacobiSVD<Matrix> svd(centered);
        const Vector sv = svd.singularValues();
        EXPECT_GT(sv(1), 1.0);
        EXPECT_LT(sv(2), 1e-9 * sv(0));
    }
}

// ---------------------------------------------------------------------------
// Dataset utilities and feature files

TEST(Dataset, DisjointClassSplit) {
    std::mt19937_64 rng(23);
    const Dataset ds = random_dataset(rng, 5, 3, 2);
    const auto [tr, ev] = split_disjoint_classes(ds);
    EXPECT_EQ(tr.classes(), (std::vector<Label>{0, 1, 2}));
    EXPECT_EQ(ev.classes(), (std::vector<Label>{3, 4}));
    EXPECT_EQ(tr.size() + ev.size(), ds.size());
}

TEST(Dataset, RejectsMismatchedLabels) {
    EXPECT_THROW(Dataset(Matrix::Zero(3, 2), {0, 1}), InvalidArgument);
    Matrix bad = Matrix::Zero(2, 2);
    bad(1, 1) = std::nan("");
    EXPECT_THROW(Dataset(bad, {0, 1}), InvalidArgument);
}

TEST(FeatureFiles, ThreeRowCsvWithHeader) {
    const auto path = temp_path("three.csv");
    write_text(path, "f1,f2,label\n0.5,1.5,0\n-2,3e-1,1\n4,5,0\n");
    const Dataset ds = load_features(path, FeatureFormat::csv);
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dim(), 2);
    EXPECT_EQ(ds.x(1, 1), 0.3);
    EXPECT_EQ(ds.y, (std::vector<Label>{0, 1, 0}));
    EXPECT_EQ(ds.class_index.at(0), (std::vector<std::size_t>{0, 2}));
}

TEST(FeatureFiles, CsvWithoutHeader) {
    const auto path = temp_path("noheader.csv");
    write_text(path, "1,2,3\n4,5,6\n");
    const Dataset ds = load_features(path, FeatureFormat::csv);
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.y[1], 6);
}

TEST(FeatureFiles, WrongColumnCountNamesLine) {
    const auto path = temp_path("bad.csv");
    write_text(path, "f1,f2,label\n1,2,0\n1,2,3,0\n");
    try {
        load_features(path, FeatureFormat::csv);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
    write_text(path, "f1,f2,label\n1,x,0\n");
    try {
        load_features(path, FeatureFormat::csv);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(FeatureFiles, UnknownFormat) {
    EXPECT_THROW(parse_feature_format("parquet"), InvalidArgument);
    EXPECT_EQ(infer_feature_format("a/b.gmf1"), FeatureFormat::gmf1);
    EXPECT_EQ(infer_feature_format("a/b.csv"), FeatureFormat::csv);
}

TEST(FeatureFiles, RoundTripBothFormats) {
    std::mt19937_64 rng(24);
    Dataset ds = random_dataset(rng, 4, 3, 5);
    const auto csv = temp_path("rt.csv");
    save_features(ds, csv, FeatureFormat::csv);
    EXPECT_EQ(load_features(csv, FeatureFormat::csv), ds);

    // GMF1 stores float32, so start from float-representable values.
    ds.x = ds.x.cast<float>().cast<double>();
    const auto bin = temp_path("rt.gmf1");
    save_features(ds, bin, FeatureFormat::gmf1);
    EXPECT_EQ(load_features(bin, FeatureFormat::gmf1), ds);
    EXPECT_EQ(std::filesystem::file_size(bin), 12u + 12u * 5u * 4u + 12u * 4u);
}

TEST(FeatureFiles, Gmf1Errors) {
    const auto path = temp_path("broken.gmf1");
    write_text(path, "GMF2");
    EXPECT_THROW(load_features(path, FeatureFormat::gmf1), ParseError);

    std::mt19937_64 rng(25);
    const Dataset ds = random_dataset(rng, 2, 2, 2);
    save_features(ds, path, FeatureFormat::gmf1);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
    try {
        load_features(path, FeatureFormat::gmf1);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("record 3"), std::string::npos) << e.what();
    }
    save_features(ds, path, FeatureFormat::gmf1);
    { std::ofstream(path, std::ios::app | std::ios::binary) << 'x'; }
    EXPECT_THROW(load_features(path, FeatureFormat::gmf1), ParseError);

    const Dataset negative(Matrix::Zero(2, 1), {-1, -1});
    EXPECT_THROW(save_features(negative, path, FeatureFormat::gmf1), InvalidArgument);
}

// ---------------------------------------------------------------------------
// Config and snapshot serialization

TEST(ModelSnapshot, RoundTripIsExact) {
    TrainConfig cfg = small_config();
    cfg.loss.mode = LossMode::mixed;
    cfg.loss.lambda = 7.5;
    cfg.seed = 123456789012345ULL;
    std::mt19937_64 rng(26);
    const EncoderParams p = init_encoder({5, 4, 3, 2, false}, rng);
    const auto path = temp_path("model.json");
    save_model(path, {p, cfg});
    const ModelSnapshot back = load_model(path);
    EXPECT_EQ(back.params.flatten(), p.flatten());
    EXPECT_EQ(back.params.shape, p.shape);
    EXPECT_EQ(back.config.loss.mode, LossMode::mixed);
    EXPECT_EQ(back.config.loss.lambda, 7.5);
    EXPECT_EQ(back.config.seed, cfg.seed);
    EXPECT_EQ(back.config.classes_per_batch, 4u);
}

TEST(ModelSnapshot, RejectsVersionMismatch) {
    std::mt19937_64 rng(27);
    const auto path = temp_path("model_v2.json");
    save_model(path, {init_encoder({2, 2, 2, 2, true}, rng), TrainConfig{}});
    Json doc = read_json_file(path);
    doc["version"] = kModelFormatVersion + 1;
    write_text(path, doc.dump());
    try {
        load_model(path);
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_EQ(e.field(), "model.version");
    }
}

TEST(ModelSnapshot, RejectsWrongParameterCount) {
    std::mt19937_64 rng(28);
    const auto path = temp_path("model_short.json");
    save_model(path, {init_encoder({2, 2, 2, 2, false}, rng), TrainConfig{}});
    Json doc = read_json_file(path);
    doc["params"].erase(0);
    write_text(path, doc.dump());
    EXPECT_THROW(load_model(path), InvalidArgument);
}

TEST(ConfigJson, UnknownKeysAndTypesNameTheField) {
    auto field_of = [](const std::string& text) {
        try {
            train_config_from_json(Json::parse(text));
        } catch (const InvalidArgument& e) {
            return e.field();
        }
        return std::string("<none>");
    };
    EXPECT_EQ(field_of(R"({"loss": {"tau": 0.1, "temp": 1}})"), "loss.temp");
    EXPECT_EQ(field_of(R"({"train": {"optimizer": {"momentum": 0.9}}})"), "train.optimizer.momentum");
    EXPECT_EQ(field_of(R"({"ball": {"c": "big"}})"), "ball.c");
    EXPECT_EQ(field_of(R"({"loss": {"mode": "spherical"}})"), "loss.mode");
    EXPECT_EQ(field_of(R"({"train": {"steps": -3}})"), "train.steps");
    EXPECT_EQ(field_of(R"({"loss": {"tau": 0.1}})"), "<none>");
}

TEST(ConfigJson, RoundTripThroughJson) {
    TrainConfig cfg = small_config();
    cfg.optimizer.kind = OptimizerKind::sgd;
    cfg.ball.c = 0.7;
    cfg.model.shared_heads = true;
    const TrainConfig back = train_config_from_json(to_json(cfg));
    EXPECT_EQ(to_json(back), to_json(cfg));
}
