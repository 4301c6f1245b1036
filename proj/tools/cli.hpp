#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gyro/config_io.hpp"
#include "gyro/evaluation.hpp"

namespace gyro::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

struct DataSource {
    std::string path;  // empty: synthetic
    std::optional<FeatureFormat> format;
    SynthConfig synthetic;
    std::uint64_t seed = 0;
    std::string split = "all";  // all | train | eval
};

struct Reports {
    bool p_profile = false;
    bool overlap = false;
    bool gradcheck = false;
    std::size_t overlap_m = 6;
    double gradcheck_threshold = 1e-4;
};

// Everything a command can read from a config file.
struct RunConfig {
    TrainConfig train;
    DataSource data;
    std::vector<std::size_t> ks{1, 2, 4, 8};
    std::optional<Metric> metric;
    Reports reports;
    std::optional<SweepGrid> grid;
    std::string out = "out";

    void validate() const;
};

/// Parses a config document; relative data paths resolve against base_dir.
RunConfig parse_run_config(const Json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// "1,2,4" -> {1, 2, 4}.
std::vector<std::size_t> parse_k_list(const std::string& text);

/// GYRO_THREADS, with unset or 0 meaning one thread.
unsigned threads_from_env();

/// Runs the command line; argv[0] is the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gyro::cli
