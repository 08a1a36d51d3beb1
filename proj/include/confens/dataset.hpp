#ifndef CONFENS_DATASET_HPP
#define CONFENS_DATASET_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace confens {

class SubsetView;

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Immutable labelled samples, one per row of the feature matrix.
//
// Every dataset remembers which rows of its root dataset it holds (`origin`),
// so subsets of subsets can still be compared by index against the full
// training set.
class Dataset {
public:
    Dataset(std::string id, int num_classes, Eigen::Index feature_dim, FeatureMatrix features,
            std::vector<int> labels);

    const std::string& id() const noexcept { return id_; }
    const std::string& root_id() const noexcept { return root_id_; }
    int num_classes() const noexcept { return num_classes_; }
    Eigen::Index feature_dim() const noexcept { return feature_dim_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    const FeatureMatrix& features() const noexcept { return features_; }
    auto features(std::size_t i) const { return features_.row(static_cast<Eigen::Index>(i)); }
    const std::vector<int>& labels() const noexcept { return labels_; }
    int label(std::size_t i) const { return labels_[i]; }
    const std::vector<std::size_t>& origin() const noexcept { return origin_; }

private:
    friend Dataset materialize(const SubsetView&, const Dataset&);

    std::string id_;
    std::string root_id_;
    int num_classes_;
    Eigen::Index feature_dim_;
    FeatureMatrix features_;
    std::vector<int> labels_;
    std::vector<std::size_t> origin_;
};

// Index set over a parent dataset; indices strictly increasing.
class SubsetView {
public:
    SubsetView(std::string parent_id, std::vector<std::size_t> indices);

    static SubsetView all(const Dataset& parent);

    const std::string& parent_id() const noexcept { return parent_id_; }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }

    bool is_subset_of(const SubsetView& other) const;

    friend bool operator==(const SubsetView&, const SubsetView&) = default;

private:
    std::string parent_id_;
    std::vector<std::size_t> indices_;
};

// Throws InvalidView if the view was built against a different dataset or an
// index is out of range.
Dataset materialize(const SubsetView& view, const Dataset& parent);

// Gaussian clusters with standard deviation `spread`. Class centers sit on a
// regular polygon in the first two coordinates (a line when dim == 1) with
// neighbouring centers 8 * spread * (1 - overlap) apart, so overlap in [0, 1)
// moves a growing fraction of samples into ambiguous regions. Samples are
// interleaved by class.
Dataset generate_blobs(int num_classes, int per_class, int dim, double spread, double overlap,
                       std::uint64_t seed);

struct CsvSchema {
    // Inferred as max label + 1 (at least 2) when absent.
    std::optional<int> num_classes;
};

// Header row names the feature columns followed by a final "label" column.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void save_csv(const Dataset& data, const std::filesystem::path& path);

// Classic big-endian ubyte containers: images (magic 0x00000803) and labels
// (magic 0x00000801). Pixels are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::optional<int> num_classes = std::nullopt);

std::string content_digest(const Dataset& data);
std::string indices_digest(std::span<const std::size_t> indices);

}  // namespace confens

#endif  // CONFENS_DATASET_HPP
