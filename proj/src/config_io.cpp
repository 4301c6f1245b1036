#include "gyro/config_io.hpp"

#include <fstream>

#include <fmt/format.h>

namespace gyro {

namespace {

std::string join(std::string_view path, std::string_view key) {
    return path.empty() ? std::string(key) : fmt::format("{}.{}", path, key);
}

void read(const Json& obj, std::string_view path, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (!v.is_number()) throw InvalidArgument(join(path, key), "expected a number");
    out = v.get<double>();
}

template <typename Int>
    requires std::is_integral_v<Int>
void read(const Json& obj, std::string_view path, const char* key, Int& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (v.is_number_unsigned()) {
        out = static_cast<Int>(v.get<std::uint64_t>());
    } else if (v.is_number_integer()) {
        const auto value = v.get<std::int64_t>();
        if (std::is_unsigned_v<Int> && value < 0) throw InvalidArgument(join(path, key), "must be >= 0");
        out = static_cast<Int>(value);
    } else {
        throw InvalidArgument(join(path, key), "expected an integer");
    }
}

void read(const Json& obj, std::string_view path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (!v.is_boolean()) throw InvalidArgument(join(path, key), "expected true or false");
    out = v.get<bool>();
}

void read(const Json& obj, std::string_view path, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    const Json& v = obj.at(key);
    if (!v.is_string()) throw InvalidArgument(join(path, key), "expected a string");
    out = v.get<std::string>();
}

// Re-labels parse errors from enum parsers with the config field path.
template <typename F>
auto with_field(const std::string& field, F&& parse) {
    try {
        return parse();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(field, e.what());
    }
}

}  // namespace

void require_keys(const Json& obj, std::string_view path, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw InvalidArgument(path.empty() ? "config" : std::string(path), "expected an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (std::string_view a : allowed) known = known || a == key;
        if (!known) throw InvalidArgument(join(path, key), "unknown key");
    }
}

Json to_json(const LossConfig& cfg) {
    return Json{{"mode", to_string(cfg.mode)}, {"tau", cfg.tau}, {"lambda", cfg.lambda}, {"combo_weight", cfg.combo_weight}};
}

Json to_json(const BallConfig& cfg) { return Json{{"c", cfg.c}, {"r", cfg.r}, {"eps_ball", cfg.eps_ball}}; }

Json to_json(const EncoderShape& shape) {
    return Json{{"input_dim", shape.input_dim},
                {"hidden", shape.hidden},
                {"embed", shape.embed},
                {"out", shape.out},
                {"shared_heads", shape.shared_heads}};
}

Json to_json(const OptimizerConfig& cfg) {
    return Json{{"kind", to_string(cfg.kind)}, {"lr", cfg.lr},       {"weight_decay", cfg.weight_decay},
                {"beta1", cfg.beta1},          {"beta2", cfg.beta2}, {"eps", cfg.eps}};
}

Json to_json(const SynthConfig& cfg) {
    return Json{{"depth", cfg.depth},
                {"branching", cfg.branching},
                {"leaf_classes", cfg.leaf_classes},
                {"samples_per_class", cfg.samples_per_class},
                {"dim", cfg.dim},
                {"noise", cfg.noise},
                {"spread", cfg.spread},
                {"level_decay", cfg.level_decay},
                {"variation_rank", cfg.variation_rank},
                {"variation_scale", cfg.variation_scale}};
}

Json to_json(const TrainConfig& cfg) {
    return Json{{"train",
                 {{"classes_per_batch", cfg.classes_per_batch},
                  {"steps", cfg.steps},
                  {"grad_clip", cfg.grad_clip},
                  {"seed", cfg.seed},
                  {"optimizer", to_json(cfg.optimizer)}}},
                {"loss", to_json(cfg.loss)},
                {"ball", to_json(cfg.ball)},
                {"model", to_json(cfg.model)}};
}

LossConfig loss_config_from_json(const Json& obj, LossConfig base) {
    require_keys(obj, "loss", {"mode", "tau", "lambda", "combo_weight"});
    if (obj.contains("mode")) {
        std::string mode;
        read(obj, "loss", "mode", mode);
        base.mode = with_field("loss.mode", [&] { return parse_loss_mode(mode); });
    }
    read(obj, "loss", "tau", base.tau);
    read(obj, "loss", "lambda", base.lambda);
    read(obj, "loss", "combo_weight", base.combo_weight);
    return base;
}

BallConfig ball_config_from_json(const Json& obj, BallConfig base) {
    require_keys(obj, "ball", {"c", "r", "eps_ball"});
    read(obj, "ball", "c", base.c);
    read(obj, "ball", "r", base.r);
    read(obj, "ball", "eps_ball", base.eps_ball);
    return base;
}

EncoderShape encoder_shape_from_json(const Json& obj, EncoderShape base) {
    require_keys(obj, "model", {"input_dim", "hidden", "embed", "out", "shared_heads"});
    read(obj, "model", "input_dim", base.input_dim);
    read(obj, "model", "hidden", base.hidden);
    read(obj, "model", "embed", base.embed);
    read(obj, "model", "out", base.out);
    read(obj, "model", "shared_heads", base.shared_heads);
    return base;
}

OptimizerConfig optimizer_config_from_json(const Json& obj, OptimizerConfig base) {
    constexpr std::string_view path = "train.optimizer";
    require_keys(obj, path, {"kind", "lr", "weight_decay", "beta1", "beta2", "eps"});
    if (obj.contains("kind")) {
        std::string kind;
        read(obj, path, "kind", kind);
        base.kind = with_field("train.optimizer.kind", [&] { return parse_optimizer(kind); });
    }
    read(obj, path, "lr", base.lr);
    read(obj, path, "weight_decay", base.weight_decay);
    read(obj, path, "beta1", base.beta1);
    read(obj, path, "beta2", base.beta2);
    read(obj, path, "eps", base.eps);
    return base;
}

SynthConfig synth_config_from_json(const Json& obj, SynthConfig base) {
    constexpr std::string_view path = "data.synthetic";
    require_keys(obj, path,
                 {"depth", "branching", "leaf_classes", "samples_per_class", "dim", "noise", "spread", "level_decay",
                  "variation_rank", "variation_scale"});
    read(obj, path, "depth", base.depth);
    read(obj, path, "branching", base.branching);
    read(obj, path, "leaf_classes", base.leaf_classes);
    read(obj, path, "samples_per_class", base.samples_per_class);
    read(obj, path, "dim", base.dim);
    read(obj, path, "noise", base.noise);
    read(obj, path, "spread", base.spread);
    read(obj, path, "level_decay", base.level_decay);
    read(obj, path, "variation_rank", base.variation_rank);
    read(obj, path, "variation_scale", base.variation_scale);
    return base;
}

TrainConfig train_config_from_json(const Json& obj, TrainConfig base) {
    if (obj.contains("train")) {
        const Json& t = obj.at("train");
        require_keys(t, "train", {"classes_per_batch", "steps", "grad_clip", "seed", "optimizer"});
        read(t, "train", "classes_per_batch", base.classes_per_batch);
        read(t, "train", "steps", base.steps);
        read(t, "train", "grad_clip", base.grad_clip);
        read(t, "train", "seed", base.seed);
        if (t.contains("optimizer")) base.optimizer = optimizer_config_from_json(t.at("optimizer"), base.optimizer);
    }
    if (obj.contains("loss")) base.loss = loss_config_from_json(obj.at("loss"), base.loss);
    if (obj.contains("ball")) base.ball = ball_config_from_json(obj.at("ball"), base.ball);
    if (obj.contains("model")) base.model = encoder_shape_from_json(obj.at("model"), base.model);
    return base;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("path", fmt::format("cannot open {}", path.string()));
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InvalidArgument("config", fmt::format("{}: {}", path.string(), e.what()));
    }
}

void save_model(const std::filesystem::path& path, const ModelSnapshot& snapshot) {
    snapshot.params.validate();
    TrainConfig echo = snapshot.config;
    echo.model = snapshot.params.shape;
    const Vector flat = snapshot.params.flatten();
    Json doc{{"format", "gyro-model"},
             {"version", kModelFormatVersion},
             {"config", to_json(echo)},
             {"params", std::vector<double>(flat.data(), flat.data() + flat.size())}};
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("{}: cannot open for writing", path.string()));
    out << doc.dump(1) << '\n';
}

ModelSnapshot load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("model", fmt::format("cannot open {}", path.string()));
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    require_keys(doc, "model", {"format", "version", "config", "params"});
    if (doc.value("format", "") != "gyro-model") throw ParseError(fmt::format("{}: not a gyro model snapshot", path.string()));
    if (!doc.contains("version") || !doc.at("version").is_number_integer() ||
        doc.at("version").get<int>() != kModelFormatVersion) {
        throw InvalidArgument("model.version", fmt::format("{}: unsupported snapshot version {} (expected {})",
                                                           path.string(), doc.value("version", Json()).dump(),
                                                           kModelFormatVersion));
    }
    if (!doc.contains("config") || !doc.contains("params") || !doc.at("params").is_array()) {
        throw ParseError(fmt::format("{}: snapshot lacks config or params", path.string()));
    }
    ModelSnapshot snap{EncoderParams(), train_config_from_json(doc.at("config"))};
    snap.params = EncoderParams(snap.config.model);
    std::vector<double> flat;
    try {
        flat = doc.at("params").get<std::vector<double>>();
    } catch (const Json::exception&) {
        throw ParseError(fmt::format("{}: params must be numbers", path.string()));
    }
    snap.params.assign(Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size())));
    snap.params.validate();
    return snap;
}

}  // namespace gyro
