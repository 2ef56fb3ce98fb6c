#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cpc {

/// Row-major so that each sample is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;

enum class Regime : std::uint8_t { easy, hard };

/// n samples of dimension d with dense class ids in [0, C).
///
/// `original_labels[c]` is the label value that dense id `c` had in the
/// source file. Regime tags are only present on synthetic fixtures.
/// A dataset may be empty (for example a zero-fraction split part); loaders
/// and learners reject empty input themselves.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Matrix features, std::vector<int> labels, int class_count,
                 std::vector<std::int64_t> original_labels = {},
                 std::vector<Regime> regime_tags = {});

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(features_.cols()); }
  int class_count() const noexcept { return class_count_; }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * dim(), dim()};
  }

  const std::vector<std::int64_t>& original_labels() const noexcept { return original_labels_; }
  const std::vector<Regime>& regime_tags() const noexcept { return regime_tags_; }
  bool has_regime_tags() const noexcept { return !regime_tags_.empty(); }

  /// Rows in the order given by `indices`; class count and label mapping are kept.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  /// Same labels, mapping and tags over a new feature matrix with the same row count.
  LabeledDataset with_features(Matrix features) const;

  std::vector<std::size_t> class_counts() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int class_count_ = 0;
  std::vector<std::int64_t> original_labels_;
  std::vector<Regime> regime_tags_;
};

/// Concatenate datasets that share dimension and label mapping.
LabeledDataset concatenate(std::span<const LabeledDataset> parts);

// --- CSV ------------------------------------------------------------------

/// Rows are "f0,...,f{d-1},label". Labels are densified to 0..C-1 in
/// ascending order of their original values.
LabeledDataset load_dataset(const std::filesystem::path& path, bool has_header);
LabeledDataset read_dataset(std::istream& in, bool has_header);

/// True when the first cell of the first line does not parse as a number.
bool sniff_header(const std::filesystem::path& path);

/// Writes a header line and the original (undensified) label values.
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
void write_dataset(std::ostream& out, const LabeledDataset& ds);

// --- splitting ------------------------------------------------------------

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  bool stratified = true;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  IndexList train;
  IndexList validation;
  IndexList test;
};

struct SplitResult {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

/// Validation and test sizes are rounded to nearest; train takes the rest.
/// Stratified splits apportion each part across classes by largest remainder.
SplitIndices split_indices(const LabeledDataset& ds, const SplitSpec& spec);
SplitResult split(const LabeledDataset& ds, const SplitSpec& spec);

struct FoldAssignment {
  std::vector<int> fold_of;
  int folds = 0;
  std::uint64_t seed = 0;

  /// Sample indices of fold `k`, ascending.
  IndexList members(int k) const;
  /// Every index not in fold `k`, ascending.
  IndexList complement(int k) const;
};

FoldAssignment kfold(const LabeledDataset& ds, int folds, std::uint64_t seed,
                     bool stratified = true);

// --- synthetic fixture ----------------------------------------------------

struct TwoRegimeSpec {
  int n_easy = 200;
  int n_hard = 200;
  int classes = 4;
  int dim = 8;
  double easy_margin = 6.0;
  double hard_margin = 0.8;
  std::uint64_t seed = 0;
};

/// Class-cluster means (classes x dim) of one regime of the fixture.
///
/// Cluster slots sit on scaled coordinate axes when classes <= dim (pairwise
/// distance = margin), otherwise on a ring in the first two coordinates with
/// adjacent distance = margin. The easy regime puts class c in slot c. The
/// hard regime is shifted away from the easy one and puts class c in slot
/// c+1 (mod C), so its feature/label relation disagrees with the easy regime.
Matrix two_regime_centers(const TwoRegimeSpec& spec, Regime regime);

/// Unit-variance isotropic Gaussian clusters around two_regime_centers().
/// Classes are balanced round-robin inside each regime; rows are shuffled.
LabeledDataset generate_two_regime(const TwoRegimeSpec& spec);

}  // namespace cpc
