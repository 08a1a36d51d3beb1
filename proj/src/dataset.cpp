#include "confens/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string_view>

#include "confens/digest.hpp"
#include "confens/errors.hpp"
#include "confens/random.hpp"

namespace confens {

Dataset::Dataset(std::string id, int num_classes, Eigen::Index feature_dim, FeatureMatrix features,
                 std::vector<int> labels)
    : id_(std::move(id)),
      root_id_(id_),
      num_classes_(num_classes),
      feature_dim_(feature_dim),
      features_(std::move(features)),
      labels_(std::move(labels)) {
    if (num_classes_ < 2) throw InvalidInput("dataset needs at least 2 classes");
    if (feature_dim_ < 1) throw InvalidInput("dataset needs at least 1 feature");
    if (features_.rows() != static_cast<Eigen::Index>(labels_.size()) ||
        (features_.rows() > 0 && features_.cols() != feature_dim_))
        throw InvalidInput("feature matrix shape does not match labels / feature_dim");
    if (features_.rows() == 0) features_.resize(0, feature_dim_);
    if (!features_.allFinite()) throw InvalidInput("dataset features must be finite");
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] < 0 || labels_[i] >= num_classes_)
            throw InvalidInput("label of sample " + std::to_string(i) + " outside [0, " +
                               std::to_string(num_classes_) + ")");
    origin_.resize(labels_.size());
    std::iota(origin_.begin(), origin_.end(), std::size_t{0});
}

SubsetView::SubsetView(std::string parent_id, std::vector<std::size_t> indices)
    : parent_id_(std::move(parent_id)), indices_(std::move(indices)) {
    for (std::size_t k = 1; k < indices_.size(); ++k)
        if (indices_[k] <= indices_[k - 1])
            throw InvalidView("subset indices must be strictly increasing");
}

SubsetView SubsetView::all(const Dataset& parent) {
    std::vector<std::size_t> idx(parent.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return SubsetView(parent.id(), std::move(idx));
}

bool SubsetView::is_subset_of(const SubsetView& other) const {
    return parent_id_ == other.parent_id_ &&
           std::includes(other.indices_.begin(), other.indices_.end(), indices_.begin(), indices_.end());
}

Dataset materialize(const SubsetView& view, const Dataset& parent) {
    if (view.parent_id() != parent.id())
        throw InvalidView("subset built for dataset '" + view.parent_id() + "' applied to '" + parent.id() +
                          "'");
    const auto& idx = view.indices();
    if (!idx.empty() && idx.back() >= parent.size())
        throw InvalidView("subset index " + std::to_string(idx.back()) + " out of range for dataset of size " +
                          std::to_string(parent.size()));

    FeatureMatrix features(static_cast<Eigen::Index>(idx.size()), parent.feature_dim());
    std::vector<int> labels(idx.size());
    std::vector<std::size_t> origin(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        features.row(static_cast<Eigen::Index>(k)) = parent.features(idx[k]);
        labels[k] = parent.label(idx[k]);
        origin[k] = parent.origin()[idx[k]];
    }
    Dataset out(parent.id() + "#" + indices_digest(idx).substr(0, 12), parent.num_classes(),
                parent.feature_dim(), std::move(features), std::move(labels));
    out.root_id_ = parent.root_id();
    out.origin_ = std::move(origin);
    return out;
}

Dataset generate_blobs(int num_classes, int per_class, int dim, double spread, double overlap,
                       std::uint64_t seed) {
    if (num_classes < 2) throw InvalidInput("blobs need at least 2 classes");
    if (per_class < 1) throw InvalidInput("blobs need at least 1 sample per class");
    if (dim < 1) throw InvalidInput("blobs need at least 1 dimension");
    if (!(spread > 0.0) || !std::isfinite(spread)) throw InvalidInput("blob spread must be positive");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidInput("blob overlap must lie in [0, 1)");

    const double spacing = 8.0 * spread * (1.0 - overlap);
    FeatureMatrix centers = FeatureMatrix::Zero(num_classes, dim);
    if (dim == 1) {
        for (int c = 0; c < num_classes; ++c) centers(c, 0) = spacing * c;
    } else {
        const double radius = spacing / (2.0 * std::sin(std::numbers::pi / num_classes));
        for (int c = 0; c < num_classes; ++c) {
            const double angle = 2.0 * std::numbers::pi * c / num_classes;
            centers(c, 0) = radius * std::cos(angle);
            centers(c, 1) = radius * std::sin(angle);
        }
    }

    const Eigen::Index n = static_cast<Eigen::Index>(num_classes) * per_class;
    FeatureMatrix features(n, dim);
    std::vector<int> labels(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % num_classes);
        labels[static_cast<std::size_t>(i)] = c;
        for (int d = 0; d < dim; ++d) features(i, d) = centers(c, d) + spread * rng.normal();
    }

    std::ostringstream id;
    id << "blobs-c" << num_classes << "-n" << per_class << "-d" << dim << "-s" << spread << "-o" << overlap
       << "-seed" << seed;
    return Dataset(id.str(), num_classes, dim, std::move(features), std::move(labels));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

std::string dataset_id_for(const std::string& kind, const std::filesystem::path& path) {
    return kind + ":" + path.filename().string();
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open CSV file " + path.string());

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw ParseError(path.string() + ": missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_commas(line);
    if (header.size() < 2 || trim(header.back()) != "label")
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": header must list feature columns followed by 'label'");
    const std::size_t dim = header.size() - 1;

    std::vector<double> values;
    std::vector<int> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != header.size())
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(cells.size()));
        for (std::size_t j = 0; j < dim; ++j) {
            double v = 0.0;
            if (!parse_number(cells[j], v) || !std::isfinite(v))
                throw ParseError(where + ": column " + std::to_string(j) + " is not a finite number");
            values.push_back(v);
        }
        int label = 0;
        if (!parse_number(cells.back(), label) || label < 0)
            throw ParseError(where + ": label is not a non-negative integer");
        if (schema.num_classes && label >= *schema.num_classes)
            throw ParseError(where + ": label " + std::to_string(label) + " >= num_classes " +
                             std::to_string(*schema.num_classes));
        labels.push_back(label);
    }

    const int num_classes =
        schema.num_classes.value_or(std::max(2, labels.empty() ? 2 : *std::max_element(labels.begin(), labels.end()) + 1));
    FeatureMatrix features =
        Eigen::Map<FeatureMatrix>(values.data(), static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
    return Dataset(dataset_id_for("csv", path), num_classes, static_cast<Eigen::Index>(dim), std::move(features),
                   std::move(labels));
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write CSV file " + path.string());
    for (Eigen::Index j = 0; j < data.feature_dim(); ++j) out << 'f' << j << ',';
    out << "label\n";
    std::array<char, 32> buf;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < data.feature_dim(); ++j) {
            // Shortest representation that parses back to the same double.
            const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), data.features()(static_cast<Eigen::Index>(i), j));
            out.write(buf.data(), res.ptr - buf.data());
            out << ',';
        }
        out << data.label(i) << '\n';
    }
    if (!out) throw IoError("failed writing CSV file " + path.string());
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open IDX file " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > buf.size()) throw ParseError(path.string() + ": truncated IDX header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<int> num_classes) {
    const auto images = read_all(images_path);
    const auto labels_raw = read_all(labels_path);

    if (read_be32(images, 0, images_path) != 0x00000803u)
        throw ParseError(images_path.string() + ": bad magic, expected 0x00000803");
    if (read_be32(labels_raw, 0, labels_path) != 0x00000801u)
        throw ParseError(labels_path.string() + ": bad magic, expected 0x00000801");

    const std::size_t count = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t label_count = read_be32(labels_raw, 4, labels_path);
    if (label_count != count)
        throw ParseError(labels_path.string() + ": " + std::to_string(label_count) + " labels for " +
                         std::to_string(count) + " images");
    const std::size_t dim = rows * cols;
    if (dim == 0) throw ParseError(images_path.string() + ": zero-sized images");
    if (images.size() != 16 + count * dim)
        throw ParseError(images_path.string() + ": expected " + std::to_string(count * dim) +
                         " pixel bytes, file holds " + std::to_string(images.size() - 16));
    if (labels_raw.size() != 8 + count)
        throw ParseError(labels_path.string() + ": expected " + std::to_string(count) + " label bytes, file holds " +
                         std::to_string(labels_raw.size() - 8));

    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
        labels[i] = labels_raw[8 + i];
        if (num_classes && labels[i] >= *num_classes)
            throw ParseError(labels_path.string() + ": record " + std::to_string(i) + " has label " +
                             std::to_string(labels[i]) + " >= num_classes");
    }
    FeatureMatrix features(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[16 + i * dim + j] / 255.0;

    const int classes =
        num_classes.value_or(std::max(2, labels.empty() ? 2 : *std::max_element(labels.begin(), labels.end()) + 1));
    return Dataset(dataset_id_for("idx", images_path), classes, static_cast<Eigen::Index>(dim), std::move(features),
                   std::move(labels));
}

std::string content_digest(const Dataset& data) {
    Sha256 h;
    h.update_u64(static_cast<std::uint64_t>(data.num_classes()))
        .update_u64(static_cast<std::uint64_t>(data.feature_dim()))
        .update_u64(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < data.feature_dim(); ++j) h.update_f64(data.features()(static_cast<Eigen::Index>(i), j));
        h.update_u64(static_cast<std::uint64_t>(data.label(i)));
    }
    return h.hex_digest();
}

std::string indices_digest(std::span<const std::size_t> indices) {
    Sha256 h;
    h.update_u64(indices.size());
    for (const auto i : indices) h.update_u64(i);
    return h.hex_digest();
}

}  // namespace confens
