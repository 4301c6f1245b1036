#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gyro/grad.hpp"

namespace gyro::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

// Flag values shared by the subcommands; each subcommand registers the ones
// it accepts.
struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string metric;
    std::optional<double> tau;
    std::optional<double> c;
    std::optional<double> lambda;
    std::string k;
    std::string format;
    std::string model;
    std::string data;
    std::string split;
    bool p_profile = false;
    bool overlap = false;
    bool gradcheck = false;
    std::optional<std::size_t> m;
};

std::string sanitize(std::string s) {
    for (char& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
        if (ch == '"') ch = '\'';
    }
    return s;
}

void log(std::ostream& err, const std::string& msg) { err << "[gyro] " << msg << '\n'; }

std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_meta(const std::filesystem::path& path, Json body, double runtime_s) {
    body["tool"] = "gyro";
    body["version"] = kVersion;
    body["created"] = timestamp();
    body["runtime_s"] = runtime_s;
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("{}: cannot open for writing", path.string()));
    out << body.dump(2) << '\n';
}

Json to_json(const DataSource& src) {
    Json j{{"split", src.split}};
    if (src.path.empty()) {
        j["synthetic"] = gyro::to_json(src.synthetic);
        j["seed"] = src.seed;
    } else {
        j["path"] = src.path;
        if (src.format) j["format"] = to_string(*src.format);
    }
    return j;
}

Dataset load_data(const DataSource& src) {
    Dataset ds;
    if (src.path.empty()) {
        std::mt19937_64 rng(src.seed);
        ds = synth_hierarchy(src.synthetic, rng);
    } else {
        if (!std::filesystem::exists(src.path)) {
            throw InvalidArgument("data.path", fmt::format("no such file: {}", src.path));
        }
        ds = load_features(src.path, src.format.value_or(infer_feature_format(src.path)));
    }
    if (src.split == "all") return ds;
    auto [tr, ev] = split_disjoint_classes(ds);
    return src.split == "train" ? tr : ev;
}

void check_split(const std::string& split) {
    if (split != "all" && split != "train" && split != "eval") {
        throw InvalidArgument("data.split", fmt::format("unknown split '{}' (expected all, train or eval)", split));
    }
}

std::string metric_tag(const std::optional<Metric>& metric, LossMode mode) {
    if (metric) return to_string(*metric);
    switch (mode) {
        case LossMode::euclidean:
            return "cos";
        case LossMode::hyperbolic:
            return "hyp";
        case LossMode::mixed:
            return "mix";
        case LossMode::convex_combo:
            return "combo";
    }
    return "hyp";
}

// Distances for reports: the explicit metric, or the one matching the
// training mode (hyperbolic for convex_combo, whose two softmaxes cannot be
// shown as one profile).
DistanceMatrix analysis_distances(const Matrix& ze, const Matrix& zh, const std::optional<Metric>& metric,
                                  const LossConfig& loss, const BallConfig& ball) {
    Metric m = Metric::hyperbolic;
    if (metric) {
        m = *metric;
    } else if (loss.mode == LossMode::euclidean) {
        m = Metric::cosine;
    } else if (loss.mode == LossMode::mixed) {
        m = Metric::mixed;
    }
    if (m == Metric::mixed) return fused_distance_matrix(ze, zh, loss.lambda, ball);
    return distance_matrix(m == Metric::cosine ? ze : zh, m, ball);
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

std::filesystem::path prepare_out(const std::string& dir) {
    const std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

// Applies command-line overrides on top of the config file.
RunConfig resolve(const Flags& f) {
    RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (!f.out.empty()) rc.out = f.out;
    if (f.seed) rc.train.seed = *f.seed;
    if (f.tau) rc.train.loss.tau = *f.tau;
    if (f.c) rc.train.ball.c = *f.c;
    if (f.lambda) rc.train.loss.lambda = *f.lambda;
    if (!f.metric.empty()) rc.metric = parse_metric(f.metric);
    if (!f.k.empty()) rc.ks = parse_k_list(f.k);
    if (!f.data.empty()) rc.data.path = f.data;
    if (!f.format.empty()) rc.data.format = parse_feature_format(f.format);
    if (!f.split.empty()) rc.data.split = f.split;
    if (f.m) rc.reports.overlap_m = *f.m;
    if (f.p_profile) rc.reports.p_profile = true;
    if (f.overlap) rc.reports.overlap = true;
    if (f.gradcheck) rc.reports.gradcheck = true;
    rc.validate();
    return rc;
}

// Model snapshot overrides: flags given explicitly win over the snapshot.
void apply_model_overrides(const Flags& f, TrainConfig& cfg) {
    if (f.tau) cfg.loss.tau = *f.tau;
    if (f.c) cfg.ball.c = *f.c;
    if (f.lambda) cfg.loss.lambda = *f.lambda;
    if (f.seed) cfg.seed = *f.seed;
    cfg.validate();
}

double tail_mean(const std::vector<double>& trace) {
    const std::size_t tail = std::min<std::size_t>(10, trace.size());
    double sum = 0.0;
    for (std::size_t i = trace.size() - tail; i < trace.size(); ++i) sum += trace[i];
    return sum / static_cast<double>(tail);
}

int cmd_train(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig rc = resolve(f);
    const Dataset ds = load_data(rc.data);
    log(err, fmt::format("train: {} rows, d={}, {} classes, {} steps, mode={}", ds.size(), ds.dim(),
                         ds.classes().size(), rc.train.steps, to_string(rc.train.loss.mode)));
    const TrainResult result = train(ds, rc.train);

    const auto dir = prepare_out(rc.out);
    save_model(dir / "model.json", {result.params, rc.train});
    write_trace_csv(result, dir / "trace.csv");
    const double final_loss = tail_mean(result.loss_trace);
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_meta(dir / "train_meta.json",
               Json{{"command", "train"},
                    {"config", to_json(rc.train)},
                    {"data", to_json(rc.data)},
                    {"seed", rc.train.seed},
                    {"rows", ds.size()},
                    {"final_loss", final_loss},
                    {"outputs", {"model.json", "trace.csv"}}},
               runtime);
    out << fmt::format("loss={}\n", final_loss);
    return kExitOk;
}

ModelSnapshot load_model_or_init(const Flags& f, const RunConfig& rc, Eigen::Index input_dim) {
    if (!f.model.empty()) {
        if (!std::filesystem::exists(f.model)) throw InvalidArgument("model", fmt::format("no such file: {}", f.model));
        ModelSnapshot snap = load_model(f.model);
        apply_model_overrides(f, snap.config);
        if (snap.params.shape.input_dim != input_dim) {
            throw InvalidArgument("model.input_dim", fmt::format("model expects d={}, data has d={}",
                                                                 snap.params.shape.input_dim, input_dim));
        }
        return snap;
    }
    if (f.config.empty()) throw InvalidArgument("model", "--model is required (or --config for a fresh model)");
    return {initial_params(rc.train, input_dim), rc.train};
}

RunConfig resolve_for_model(const Flags& f) {
    // Without a config only the data flags matter; an empty RunConfig would
    // otherwise silently fall back to synthetic data.
    if (f.config.empty() && f.data.empty()) throw InvalidArgument("data", "--data or --config is required");
    return resolve(f);
}

int cmd_eval(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    if (f.model.empty()) throw InvalidArgument("model", "--model is required");
    const RunConfig rc = resolve_for_model(f);
    const Dataset ds = load_data(rc.data);
    const ModelSnapshot snap = load_model_or_init(f, rc, ds.dim());
    const TrainConfig& cfg = snap.config;

    const auto [ze, zh] = embed(snap.params, ds.x, cfg.ball);
    const Matrix dist = rc.metric ? retrieval_distances(ze, zh, *rc.metric, cfg.loss.lambda, cfg.ball)
                                  : mode_distances(ze, zh, cfg.loss, cfg.ball);
    const RetrievalReport report = recall_at_k(dist, ds.y, rc.ks, metric_tag(rc.metric, cfg.loss.mode));
    log(err, fmt::format("eval: {} queries, metric={}", report.queries, report.metric));

    const auto dir = prepare_out(rc.out);
    write_recall_csv(report, dir / "recall.csv");
    std::string line;
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        line += fmt::format("{}recall@{}={}", i ? " " : "", report.ks[i], report.recall[i]);
    }
    const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_meta(dir / "eval_meta.json",
               Json{{"command", "eval"},
                    {"model", f.model},
                    {"model_config", to_json(cfg)},
                    {"data", to_json(rc.data)},
                    {"metric", report.metric},
                    {"queries", report.queries},
                    {"outputs", {"recall.csv"}}},
               runtime);
    out << line << '\n';
    return kExitOk;
}

int cmd_analyze(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    const RunConfig rc = resolve_for_model(f);
    if (!rc.reports.p_profile && !rc.reports.overlap && !rc.reports.gradcheck) {
        throw InvalidArgument("reports", "select at least one of --p-profile, --overlap, --gradcheck");
    }
    const Dataset ds = load_data(rc.data);
    const ModelSnapshot snap = load_model_or_init(f, rc, ds.dim());
    const TrainConfig& cfg = snap.config;
    const auto dir = prepare_out(rc.out);
    std::vector<std::string> results;
    std::vector<std::string> outputs;
    Json meta{{"command", "analyze"}, {"model", f.model}, {"model_config", to_json(cfg)}, {"data", to_json(rc.data)}};

    if (rc.reports.overlap) {
        const auto [ze, zh] = embed(snap.params, ds.x, cfg.ball);
        const OverlapReport ov = overlap_report(ze, zh, ds.y, rc.reports.overlap_m, cfg.ball);
        write_overlap_csv(ov, dir / "overlap.csv");
        outputs.emplace_back("overlap.csv");
        results.push_back(fmt::format("mean_jaccard={} differing_anchors={}", ov.mean_jaccard, ov.anchors_with_difference));
        meta["overlap"] = {{"m", ov.m}, {"mean_jaccard", ov.mean_jaccard}, {"differing_anchors", ov.anchors_with_difference}};
    }

    // One held-out batch drawn with the run seed serves the batch reports.
    std::mt19937_64 rng(cfg.seed);
    std::optional<BatchIndices> batch;
    if (rc.reports.p_profile || rc.reports.gradcheck) batch = sample_batch(ds, cfg.classes_per_batch, rng);

    if (rc.reports.p_profile) {
        const auto [ze, zh] = embed(snap.params, gather_rows(ds.x, batch->rows), cfg.ball);
        const DistanceMatrix d = analysis_distances(ze, zh, rc.metric, cfg.loss, cfg.ball);
        const PProfile prof = p_profile(d, batch->pairing, cfg.loss.tau);
        write_p_profile_csv(prof, dir / "p_profile.csv");
        outputs.emplace_back("p_profile.csv");
        const Vector peak = max_p_per_anchor(prof, batch->pairing.size());
        results.push_back(fmt::format("max_p={}", peak.maxCoeff()));
        meta["p_profile"] = {{"tau", cfg.loss.tau},
                             {"metric", metric_tag(rc.metric, cfg.loss.mode == LossMode::convex_combo
                                                                  ? LossMode::hyperbolic
                                                                  : cfg.loss.mode)},
                             {"rows", batch->rows},
                             {"uniform_level", 1.0 / static_cast<double>(batch->pairing.size() - 1)}};
    }

    bool gradcheck_failed = false;
    if (rc.reports.gradcheck) {
        const Matrix x = gather_rows(ds.x, batch->rows);
        const ParamLossGrad lg = batch_loss_grad(snap.params, x, batch->pairing, cfg.loss, cfg.ball);
        const EncoderShape shape = snap.params.shape;
        auto fn = [&](const Vector& flat) {
            EncoderParams p(shape);
            p.assign(flat);
            return batch_loss_grad(p, x, batch->pairing, cfg.loss, cfg.ball).loss;
        };
        const GradientReport report =
            compare_gradients(lg.grad, fd_gradient(fn, snap.params.flatten(), 1e-5, threads_from_env()));
        gradcheck_failed = report.max_rel_err > rc.reports.gradcheck_threshold;
        results.push_back(fmt::format("max_rel_err={}", report.max_rel_err));
        meta["gradcheck"] = {{"max_rel_err", report.max_rel_err},
                             {"max_abs_err", report.max_abs_err},
                             {"threshold", rc.reports.gradcheck_threshold},
                             {"parameters", report.analytic.size()},
                             {"passed", !gradcheck_failed}};
    }

    meta["outputs"] = outputs;
    write_meta(dir / "analyze_meta.json", meta,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    std::string line;
    for (const auto& r : results) line += (line.empty() ? "" : " ") + r;
    out << line << '\n';
    if (gradcheck_failed) {
        throw NumericError(fmt::format("gradcheck: relative error above {}", rc.reports.gradcheck_threshold));
    }
    log(err, "analyze: done");
    return kExitOk;
}

int cmd_sweep(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    if (f.config.empty()) throw InvalidArgument("config", "--config with a sweep section is required");
    const RunConfig rc = resolve(f);
    if (!rc.grid) throw InvalidArgument("sweep", "config has no sweep section");
    const Dataset ds = load_data(rc.data);
    const unsigned threads = threads_from_env();
    log(err, fmt::format("sweep: {} cells on {} thread(s)", rc.grid->size(), threads));
    const SweepReport report = sweep(ds, rc.train, *rc.grid, rc.train.seed, threads);

    const auto dir = prepare_out(rc.out);
    write_sweep_csv(report, dir / "sweep.csv");
    Json cells = Json::array();
    std::size_t ok = 0;
    double best = -1.0;
    for (const SweepCell& c : report.cells) {
        cells.push_back({{"mode", to_string(c.mode)},
                         {"tau", c.tau},
                         {"c", c.c},
                         {"lambda", c.lambda},
                         {"seed", c.seed},
                         {"status", c.status},
                         {"message", c.message},
                         {"runtime_s", c.runtime_s}});
        if (c.status == "ok") {
            ++ok;
            best = std::max(best, c.recall1);
        }
    }
    Json grid{{"modes", Json::array()}, {"tau", rc.grid->taus}, {"c", rc.grid->cs}, {"lambda", rc.grid->lambdas}};
    for (LossMode m : rc.grid->modes) grid["modes"].push_back(to_string(m));
    write_meta(dir / "sweep_meta.json",
               Json{{"command", "sweep"},
                    {"config", to_json(rc.train)},
                    {"data", to_json(rc.data)},
                    {"grid", grid},
                    {"seed", report.seed},
                    {"cells", cells},
                    {"outputs", {"sweep.csv"}}},
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    out << fmt::format("cells={} ok={} best_recall1={}\n", report.cells.size(), ok, ok ? best : std::nan(""));
    return kExitOk;
}

int cmd_gen_data(const Flags& f, std::ostream& out, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (!f.out.empty()) rc.out = f.out;
    if (f.seed) rc.data.seed = *f.seed;
    const FeatureFormat format = f.format.empty() ? FeatureFormat::csv : parse_feature_format(f.format);
    rc.data.synthetic.validate();

    std::mt19937_64 rng(rc.data.seed);
    const Dataset ds = synth_hierarchy(rc.data.synthetic, rng);
    const auto dir = prepare_out(rc.out);
    const std::string name = format == FeatureFormat::csv ? "data.csv" : "data.gmf1";
    save_features(ds, dir / name, format);
    log(err, fmt::format("gen-data: wrote {}", (dir / name).string()));
    write_meta(dir / "gen_meta.json",
               Json{{"command", "gen-data"},
                    {"synthetic", gyro::to_json(rc.data.synthetic)},
                    {"seed", rc.data.seed},
                    {"format", to_string(format)},
                    {"outputs", {name}}},
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    out << fmt::format("rows={} dim={} classes={}\n", ds.size(), ds.dim(), ds.classes().size());
    return kExitOk;
}

int fail(std::ostream& err, int code, std::string_view kind, std::string_view field, const std::string& msg) {
    err << "error kind=" << kind;
    if (!field.empty()) err << " field=" << field;
    err << " msg=\"" << sanitize(msg) << "\"\n";
    return code;
}

}  // namespace

void RunConfig::validate() const {
    train.validate();
    check_split(data.split);
    if (data.path.empty()) data.synthetic.validate();
    if (ks.empty()) throw InvalidArgument("eval.k", "empty K list");
    for (std::size_t k : ks) {
        if (k < 1) throw InvalidArgument("eval.k", "K must be >= 1");
    }
    if (reports.overlap_m < 1) throw InvalidArgument("reports.overlap_m", "must be >= 1");
    if (!(reports.gradcheck_threshold > 0.0)) throw InvalidArgument("reports.gradcheck_threshold", "must be > 0");
    if (grid) grid->validate();
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
    std::vector<std::size_t> ks;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        const std::string item = text.substr(start, comma - start);
        std::size_t value = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || value < 1) {
            throw InvalidArgument("k", fmt::format("bad K list '{}' (expected positive integers like 1,2,4)", text));
        }
        ks.push_back(value);
        start = comma + 1;
    }
    return ks;
}

unsigned threads_from_env() {
    const char* env = std::getenv("GYRO_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    unsigned value = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw InvalidArgument("GYRO_THREADS", fmt::format("not a non-negative integer: '{}'", s));
    }
    return std::max(1u, value);
}

RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir) {
    require_keys(doc, "", {"data", "train", "loss", "ball", "model", "eval", "reports", "sweep", "out"});
    RunConfig rc;
    rc.train = train_config_from_json(doc);

    if (doc.contains("data")) {
        const Json& d = doc.at("data");
        require_keys(d, "data", {"path", "format", "synthetic", "seed", "split"});
        if (d.contains("path") && d.contains("synthetic")) {
            throw InvalidArgument("data", "give either path or synthetic, not both");
        }
        if (d.contains("path")) {
            if (!d.at("path").is_string()) throw InvalidArgument("data.path", "expected a string");
            std::filesystem::path p = d.at("path").get<std::string>();
            if (p.is_relative()) p = base_dir / p;
            rc.data.path = p.string();
        }
        if (d.contains("format")) {
            if (!d.at("format").is_string()) throw InvalidArgument("data.format", "expected a string");
            rc.data.format = parse_feature_format(d.at("format").get<std::string>());
        }
        if (d.contains("synthetic")) rc.data.synthetic = synth_config_from_json(d.at("synthetic"));
        if (d.contains("seed")) {
            if (!d.at("seed").is_number_unsigned()) throw InvalidArgument("data.seed", "expected a non-negative integer");
            rc.data.seed = d.at("seed").get<std::uint64_t>();
        }
        if (d.contains("split")) {
            if (!d.at("split").is_string()) throw InvalidArgument("data.split", "expected a string");
            rc.data.split = d.at("split").get<std::string>();
        }
    }

    if (doc.contains("eval")) {
        const Json& e = doc.at("eval");
        require_keys(e, "eval", {"k", "metric"});
        if (e.contains("k")) {
            const Json& k = e.at("k");
            if (!k.is_array()) throw InvalidArgument("eval.k", "expected a list of integers");
            rc.ks.clear();
            for (const Json& v : k) {
                if (!v.is_number_unsigned()) throw InvalidArgument("eval.k", "expected positive integers");
                rc.ks.push_back(v.get<std::size_t>());
            }
        }
        if (e.contains("metric")) {
            if (!e.at("metric").is_string()) throw InvalidArgument("eval.metric", "expected a string");
            try {
                rc.metric = parse_metric(e.at("metric").get<std::string>());
            } catch (const InvalidArgument& ex) {
                throw InvalidArgument("eval.metric", ex.what());
            }
        }
    }

    if (doc.contains("reports")) {
        const Json& r = doc.at("reports");
        require_keys(r, "reports", {"p_profile", "overlap", "gradcheck", "overlap_m", "gradcheck_threshold"});
        auto flag = [&](const char* key, bool& out) {
            if (!r.contains(key)) return;
            if (!r.at(key).is_boolean()) throw InvalidArgument(fmt::format("reports.{}", key), "expected true or false");
            out = r.at(key).get<bool>();
        };
        flag("p_profile", rc.reports.p_profile);
        flag("overlap", rc.reports.overlap);
        flag("gradcheck", rc.reports.gradcheck);
        if (r.contains("overlap_m")) {
            if (!r.at("overlap_m").is_number_unsigned()) throw InvalidArgument("reports.overlap_m", "expected a positive integer");
            rc.reports.overlap_m = r.at("overlap_m").get<std::size_t>();
        }
        if (r.contains("gradcheck_threshold")) {
            if (!r.at("gradcheck_threshold").is_number()) throw InvalidArgument("reports.gradcheck_threshold", "expected a number");
            rc.reports.gradcheck_threshold = r.at("gradcheck_threshold").get<double>();
        }
    }

    if (doc.contains("sweep")) {
        const Json& s = doc.at("sweep");
        require_keys(s, "sweep", {"modes", "tau", "c", "lambda"});
        SweepGrid grid;
        auto numbers = [&](const char* key, std::vector<double>& out, double fallback) {
            if (!s.contains(key)) {
                out = {fallback};
                return;
            }
            const Json& v = s.at(key);
            if (!v.is_array()) throw InvalidArgument(fmt::format("sweep.{}", key), "expected a list of numbers");
            for (const Json& x : v) {
                if (!x.is_number()) throw InvalidArgument(fmt::format("sweep.{}", key), "expected a list of numbers");
                out.push_back(x.get<double>());
            }
        };
        numbers("tau", grid.taus, rc.train.loss.tau);
        numbers("c", grid.cs, rc.train.ball.c);
        numbers("lambda", grid.lambdas, rc.train.loss.lambda);
        if (s.contains("modes")) {
            if (!s.at("modes").is_array()) throw InvalidArgument("sweep.modes", "expected a list of mode names");
            for (const Json& x : s.at("modes")) {
                if (!x.is_string()) throw InvalidArgument("sweep.modes", "expected a list of mode names");
                try {
                    grid.modes.push_back(parse_loss_mode(x.get<std::string>()));
                } catch (const InvalidArgument& ex) {
                    throw InvalidArgument("sweep.modes", ex.what());
                }
            }
        } else {
            grid.modes = {rc.train.loss.mode};
        }
        rc.grid = grid;
    }

    if (doc.contains("out")) {
        if (!doc.at("out").is_string()) throw InvalidArgument("out", "expected a string");
        rc.out = doc.at("out").get<std::string>();
    }
    rc.validate();
    return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InvalidArgument("config", fmt::format("no such file: {}", path.string()));
    return parse_run_config(read_json_file(path), path.parent_path());
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"gyro: contrastive training and analysis in Euclidean and Poincare-ball geometry"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Flags f;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", f.config, "JSON run config");
        sub->add_option("--out", f.out, "output directory");
        sub->add_option("--seed", f.seed, "RNG seed");
    };
    auto hyper = [&](CLI::App* sub) {
        sub->add_option("--tau", f.tau, "temperature");
        sub->add_option("--c", f.c, "ball curvature");
        sub->add_option("--lambda", f.lambda, "hyperbolic weight of the mixed distance");
    };
    auto data = [&](CLI::App* sub) {
        sub->add_option("--data", f.data, "feature file (csv or gmf1)");
        sub->add_option("--format", f.format, "feature file format")->check(CLI::IsMember({"csv", "gmf1"}));
        sub->add_option("--split", f.split, "class split to use")->check(CLI::IsMember({"all", "train", "eval"}));
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train an encoder; writes model.json and trace.csv");
    common(train_cmd);
    hyper(train_cmd);
    data(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Recall@K of a trained model; writes recall.csv");
    common(eval_cmd);
    hyper(eval_cmd);
    data(eval_cmd);
    eval_cmd->add_option("--model", f.model, "model snapshot");
    eval_cmd->add_option("--metric", f.metric, "retrieval distance")->check(CLI::IsMember({"cos", "hyp", "mix"}));
    eval_cmd->add_option("--k", f.k, "comma-separated K list");

    CLI::App* analyze_cmd = app.add_subcommand("analyze", "p(x-) profile, hard-negative overlap, gradient check");
    common(analyze_cmd);
    hyper(analyze_cmd);
    data(analyze_cmd);
    analyze_cmd->add_option("--model", f.model, "model snapshot (default: fresh model from --config)");
    analyze_cmd->add_option("--metric", f.metric, "distance for the p profile")->check(CLI::IsMember({"cos", "hyp", "mix"}));
    analyze_cmd->add_flag("--p-profile", f.p_profile, "write p_profile.csv");
    analyze_cmd->add_flag("--overlap", f.overlap, "write overlap.csv");
    analyze_cmd->add_flag("--gradcheck", f.gradcheck, "finite-difference check of the parameter gradient");
    analyze_cmd->add_option("--m", f.m, "hard negatives per anchor for --overlap");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "train and evaluate every cell of the config grid");
    common(sweep_cmd);

    CLI::App* gen_cmd = app.add_subcommand("gen-data", "write a synthetic hierarchical dataset");
    common(gen_cmd);
    gen_cmd->add_option("--format", f.format, "output format")->check(CLI::IsMember({"csv", "gmf1"}));

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return fail(err, kExitValidation, "usage", "", e.what());
    }

    try {
        if (train_cmd->parsed()) return cmd_train(f, out, err);
        if (eval_cmd->parsed()) return cmd_eval(f, out, err);
        if (analyze_cmd->parsed()) return cmd_analyze(f, out, err);
        if (sweep_cmd->parsed()) return cmd_sweep(f, out, err);
        if (gen_cmd->parsed()) return cmd_gen_data(f, out, err);
    } catch (const InvalidArgument& e) {
        return fail(err, kExitValidation, "validation", e.field(), e.what());
    } catch (const ParseError& e) {
        return fail(err, kExitValidation, "validation", "data", e.what());
    } catch (const NumericError& e) {
        return fail(err, kExitRuntime, "numeric", "", e.what());
    } catch (const DomainError& e) {
        return fail(err, kExitRuntime, "numeric", "", e.what());
    } catch (const std::exception& e) {
        return fail(err, kExitRuntime, "runtime", "", e.what());
    }
    return fail(err, kExitValidation, "usage", "", "no subcommand");
}

}  // namespace gyro::cli
