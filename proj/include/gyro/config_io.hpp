#pragma once

// JSON (de)serialization of configs and model snapshots. Readers reject
// unknown keys and wrong value types with InvalidArgument naming the dotted
// field path; missing keys keep their defaults.

#include <filesystem>
#include <initializer_list>
#include <string_view>

#include <json.hpp>

#include "gyro/dataset.hpp"
#include "gyro/training.hpp"

namespace gyro {

using Json = nlohmann::ordered_json;

/// Throws InvalidArgument("<path>.<key>", ...) for the first key of obj not
/// in allowed. Also throws when obj is not an object.
void require_keys(const Json& obj, std::string_view path, std::initializer_list<std::string_view> allowed);

Json to_json(const LossConfig& cfg);
Json to_json(const BallConfig& cfg);
Json to_json(const EncoderShape& shape);
Json to_json(const OptimizerConfig& cfg);
Json to_json(const SynthConfig& cfg);

// Layout: {"train": {...}, "loss": {...}, "ball": {...}, "model": {...}}.
Json to_json(const TrainConfig& cfg);

// Each reader starts from `base` and overrides the keys present in obj.
LossConfig loss_config_from_json(const Json& obj, LossConfig base = {});
BallConfig ball_config_from_json(const Json& obj, BallConfig base = {});
EncoderShape encoder_shape_from_json(const Json& obj, EncoderShape base = {});
OptimizerConfig optimizer_config_from_json(const Json& obj, OptimizerConfig base = {});
SynthConfig synth_config_from_json(const Json& obj, SynthConfig base = {});

/// Reads the train/loss/ball/model sections of obj; other top-level keys are
/// left to the caller.
TrainConfig train_config_from_json(const Json& obj, TrainConfig base = {});

inline constexpr int kModelFormatVersion = 1;

struct ModelSnapshot {
    EncoderParams params;
    TrainConfig config;  // echo of the run that produced params
};

void save_model(const std::filesystem::path& path, const ModelSnapshot& snapshot);

/// Throws InvalidArgument("model.version", ...) on a version mismatch and
/// ParseError when the file is unreadable or malformed.
ModelSnapshot load_model(const std::filesystem::path& path);

Json read_json_file(const std::filesystem::path& path);

}  // namespace gyro
