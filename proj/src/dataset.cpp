#include "gyro/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace gyro {

Dataset::Dataset(Matrix features, std::vector<Label> labels) : x(std::move(features)), y(std::move(labels)) {
    validate();
    build_index();
}

void Dataset::build_index() {
    class_index.clear();
    for (std::size_t i = 0; i < y.size(); ++i) class_index[y[i]].push_back(i);
}

std::vector<Label> Dataset::classes() const {
    std::vector<Label> out;
    out.reserve(class_index.size());
    for (const auto& [label, rows] : class_index) out.push_back(label);
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Matrix xs(static_cast<Eigen::Index>(rows.size()), x.cols());
    std::vector<Label> ys;
    ys.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= size()) throw InvalidArgument("dataset.subset", "row index out of range");
        xs.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
        ys.push_back(y[rows[i]]);
    }
    return Dataset(std::move(xs), std::move(ys));
}

void Dataset::validate() const {
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw InvalidArgument("dataset", "feature rows and labels differ in count");
    }
    if (!x.allFinite()) throw InvalidArgument("dataset", "features contain non-finite values");
}

std::pair<Dataset, Dataset> split_disjoint_classes(const Dataset& ds) {
    const std::vector<Label> labels = ds.classes();
    const std::size_t train_classes = (labels.size() + 1) / 2;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> eval_rows;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        const auto& rows = ds.class_index.at(labels[c]);
        auto& target = c < train_classes ? train_rows : eval_rows;
        target.insert(target.end(), rows.begin(), rows.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(eval_rows.begin(), eval_rows.end());
    return {ds.subset(train_rows), ds.subset(eval_rows)};
}

FeatureFormat parse_feature_format(std::string_view text) {
    if (text == "csv") return FeatureFormat::csv;
    if (text == "gmf1") return FeatureFormat::gmf1;
    throw InvalidArgument("format", "unknown feature format '" + std::string(text) + "' (expected csv or gmf1)");
}

std::string to_string(FeatureFormat format) { return format == FeatureFormat::csv ? "csv" : "gmf1"; }

FeatureFormat infer_feature_format(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    return (ext == ".bin" || ext == ".gmf1") ? FeatureFormat::gmf1 : FeatureFormat::csv;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
            field.remove_suffix(1);
        }
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_label(std::string_view s, Label& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("{}: cannot open file", path.string()));

    std::vector<double> values;
    std::vector<Label> labels;
    std::size_t columns = 0;
    std::size_t line_no = 0;
    bool first_content = true;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_fields(line);

        std::vector<double> row(fields.size() - 1);
        bool numeric = fields.size() >= 2;
        for (std::size_t j = 0; numeric && j + 1 < fields.size(); ++j) numeric = parse_double(fields[j], row[j]);
        Label label = 0;
        numeric = numeric && parse_label(fields.back(), label);

        if (!numeric && first_content) {
            // Header line.
            first_content = false;
            columns = fields.size();
            continue;
        }
        first_content = false;
        if (columns == 0) columns = fields.size();
        if (fields.size() != columns) {
            throw ParseError(fmt::format("{}:{}: expected {} columns, got {}", path.string(), line_no, columns,
                                         fields.size()));
        }
        if (columns < 2) throw ParseError(fmt::format("{}:{}: need at least one feature and a label", path.string(), line_no));
        if (!numeric) throw ParseError(fmt::format("{}:{}: malformed record", path.string(), line_no));
        for (double v : row) {
            if (!std::isfinite(v)) throw ParseError(fmt::format("{}:{}: non-finite feature", path.string(), line_no));
        }
        values.insert(values.end(), row.begin(), row.end());
        labels.push_back(label);
    }
    if (labels.empty()) throw ParseError(fmt::format("{}: no records", path.string()));
    const auto d = static_cast<Eigen::Index>(columns - 1);
    Matrix x = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()), d);
    return Dataset(std::move(x), std::move(labels));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("{}: cannot open for writing", path.string()));
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << 'f' << (j + 1) << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) out << fmt::format("{}", ds.x(static_cast<Eigen::Index>(i), j)) << ',';
        out << ds.y[i] << '\n';
    }
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> bytes = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(bytes.data(), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

Dataset load_gmf1(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(fmt::format("{}: cannot open file", path.string()));
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "GMF1", 4) != 0) {
        throw ParseError(fmt::format("{}: missing GMF1 magic", path.string()));
    }
    std::uint32_t m = 0;
    std::uint32_t d = 0;
    if (!get_u32(in, m) || !get_u32(in, d)) throw ParseError(fmt::format("{}: truncated header", path.string()));
    if (m == 0 || d == 0) throw ParseError(fmt::format("{}: empty dataset (M={}, d={})", path.string(), m, d));

    Matrix x(m, d);
    for (std::uint32_t i = 0; i < m; ++i) {
        for (std::uint32_t j = 0; j < d; ++j) {
            std::uint32_t bits = 0;
            if (!get_u32(in, bits)) throw ParseError(fmt::format("{}: record {}: truncated features", path.string(), i));
            float value = 0.0f;
            std::memcpy(&value, &bits, sizeof value);
            if (!std::isfinite(value)) throw ParseError(fmt::format("{}: record {}: non-finite feature", path.string(), i));
            x(i, j) = static_cast<double>(value);
        }
    }
    std::vector<Label> labels(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        std::uint32_t label = 0;
        if (!get_u32(in, label)) throw ParseError(fmt::format("{}: record {}: truncated label", path.string(), i));
        labels[i] = static_cast<Label>(label);
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw ParseError(fmt::format("{}: trailing bytes after {} records", path.string(), m));
    }
    return Dataset(std::move(x), std::move(labels));
}

void save_gmf1(const Dataset& ds, const std::filesystem::path& path) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (ds.size() > kMax || static_cast<std::size_t>(ds.dim()) > kMax) {
        throw InvalidArgument("gmf1", "dataset too large for 32-bit header");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.y[i] < 0 || static_cast<std::uint64_t>(ds.y[i]) > kMax) {
            throw InvalidArgument("gmf1", fmt::format("record {}: label {} does not fit in u32", i, ds.y[i]));
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(fmt::format("{}: cannot open for writing", path.string()));
    out.write("GMF1", 4);
    put_u32(out, static_cast<std::uint32_t>(ds.size()));
    put_u32(out, static_cast<std::uint32_t>(ds.dim()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) {
            const auto value = static_cast<float>(ds.x(static_cast<Eigen::Index>(i), j));
            std::uint32_t bits = 0;
            std::memcpy(&bits, &value, sizeof bits);
            put_u32(out, bits);
        }
    }
    for (Label label : ds.y) put_u32(out, static_cast<std::uint32_t>(label));
}

}  // namespace

Dataset load_features(const std::filesystem::path& path, FeatureFormat format) {
    return format == FeatureFormat::csv ? load_csv(path) : load_gmf1(path);
}

void save_features(const Dataset& ds, const std::filesystem::path& path, FeatureFormat format) {
    ds.validate();
    if (format == FeatureFormat::csv) {
        save_csv(ds, path);
    } else {
        save_gmf1(ds, path);
    }
}

void SynthConfig::validate() const {
    if (depth < 1) throw InvalidArgument("synthetic.depth", "must be >= 1");
    if (branching < 1) throw InvalidArgument("synthetic.branching", "must be >= 1");
    if (leaf_classes < 1) throw InvalidArgument("synthetic.leaf_classes", "must be >= 1");
    if (samples_per_class < 1) throw InvalidArgument("synthetic.samples_per_class", "must be >= 1");
    if (dim < 1) throw InvalidArgument("synthetic.dim", "must be >= 1");
    if (!(noise >= 0.0)) throw InvalidArgument("synthetic.noise", "must be >= 0");
    if (!(spread > 0.0)) throw InvalidArgument("synthetic.spread", "must be > 0");
    if (!(level_decay > 0.0)) throw InvalidArgument("synthetic.level_decay", "must be > 0");
    if (variation_rank > dim) throw InvalidArgument("synthetic.variation_rank", "must be <= dim");
    if (!(variation_scale >= 0.0)) throw InvalidArgument("synthetic.variation_scale", "must be >= 0");
}

Dataset synth_hierarchy(const SynthConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const auto d = static_cast<Eigen::Index>(cfg.dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto offset = [&](double scale) {
        Vector v(d);
        for (Eigen::Index j = 0; j < d; ++j) v(j) = scale * normal(rng);
        return v;
    };

    // Internal levels 1 .. depth - 1, each node a Gaussian step from its parent.
    std::vector<Vector> level{Vector::Zero(d)};
    double scale = cfg.spread;
    for (std::size_t l = 1; l < cfg.depth; ++l) {
        std::vector<Vector> next;
        next.reserve(level.size() * cfg.branching);
        for (const Vector& parent : level) {
            for (std::size_t b = 0; b < cfg.branching; ++b) next.push_back(parent + offset(scale));
        }
        level = std::move(next);
        scale *= cfg.level_decay;
    }
    std::vector<Vector> leaves;
    leaves.reserve(cfg.leaf_classes);
    for (std::size_t c = 0; c < cfg.leaf_classes; ++c) leaves.push_back(level[c % level.size()] + offset(scale));

    Matrix x(static_cast<Eigen::Index>(cfg.leaf_classes * cfg.samples_per_class), d);
    std::vector<Label> y;
    y.reserve(cfg.leaf_classes * cfg.samples_per_class);
    Eigen::Index row = 0;
    const auto q = static_cast<Eigen::Index>(cfg.variation_rank);
    // Column scale keeps E|A z|^2 = variation_scale^2 * q regardless of d.
    const double column_scale = cfg.variation_scale / std::sqrt(static_cast<double>(d));
    for (std::size_t c = 0; c < cfg.leaf_classes; ++c) {
        Matrix a(d, q);
        for (Eigen::Index k = 0; k < q; ++k) a.col(k) = offset(column_scale);
        for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
            Vector z(q);
            for (Eigen::Index k = 0; k < q; ++k) z(k) = normal(rng);
            x.row(row++) = (leaves[c] + a * z + offset(cfg.noise)).transpose();
            y.push_back(static_cast<Label>(c));
        }
    }
    return Dataset(std::move(x), std::move(y));
}

}  // namespace gyro
