#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string_view>

#include "gyro/types.hpp"

namespace gyro {

// Feature matrix with one sample per row and an index from label to rows.
struct Dataset {
    Matrix x;
    std::vector<Label> y;
    std::map<Label, std::vector<std::size_t>> class_index;

    Dataset() = default;
    Dataset(Matrix features, std::vector<Label> labels);

    std::size_t size() const { return y.size(); }
    Eigen::Index dim() const { return x.cols(); }

    // Sorted distinct labels.
    std::vector<Label> classes() const;

    // Rows in the given order, index rebuilt.
    Dataset subset(const std::vector<std::size_t>& rows) const;

    // Throws when shapes disagree or a value is not finite.
    void validate() const;

    bool operator==(const Dataset& other) const { return y == other.y && x == other.x; }

private:
    void build_index();
};

/// Disjoint class split: the first ceil(C / 2) classes in label order form
/// the training part, the remaining classes the evaluation part.
std::pair<Dataset, Dataset> split_disjoint_classes(const Dataset& ds);

enum class FeatureFormat { csv, gmf1 };

FeatureFormat parse_feature_format(std::string_view text);
std::string to_string(FeatureFormat format);
/// ".bin" / ".gmf1" select gmf1, everything else csv.
FeatureFormat infer_feature_format(const std::filesystem::path& path);

// Raised for unreadable or malformed feature files; the message names the
// line (CSV) or record (GMF1) at fault.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// CSV: one sample per line, label in the last column, optional header line.
/// GMF1: little-endian "GMF1", u32 M, u32 d, M*d float32, M u32 labels.
Dataset load_features(const std::filesystem::path& path, FeatureFormat format);
void save_features(const Dataset& ds, const std::filesystem::path& path, FeatureFormat format);

struct SynthConfig {
    std::size_t depth = 3;
    std::size_t branching = 2;
    std::size_t leaf_classes = 16;
    std::size_t samples_per_class = 50;
    std::size_t dim = 16;
    double noise = 0.2;       // isotropic per-coordinate std around the leaf center
    std::size_t variation_rank = 2;  // per-class directions of large within-class variation
    double variation_scale = 6.0;    // std of a sample's displacement along those directions
    double spread = 2.0;      // per-coordinate std of the first-level offsets
    double level_decay = 0.5; // offset std shrinks by this factor per level

    void validate() const;
};

/// Hierarchical Gaussian clusters. Internal nodes form a `branching`-ary tree
/// of depth - 1 levels below the root; the leaf classes attach round-robin to
/// the deepest internal level. Every child center is its parent's center plus
/// a Gaussian offset whose scale shrinks per level. Each class also draws a
/// random d x variation_rank map A, and a sample is center + A z + noise with
/// z standard normal, so classes are elongated rather than round. Samples are
/// ordered by class.
Dataset synth_hierarchy(const SynthConfig& cfg, std::mt19937_64& rng);

}  // namespace gyro
