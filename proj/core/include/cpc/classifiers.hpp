#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpc/dataset.hpp"

namespace cpc {

enum class ClassifierKind { softmax, linear_svm, random_forest, knn };

std::string_view to_string(ClassifierKind kind);
/// Accepts the canonical names plus the CLI short forms "svm" and "forest".
ClassifierKind parse_classifier_kind(std::string_view name);

/// Mini-batch SGD with classical momentum. batch_size 0 means full batch.
struct SgdParams {
  double learning_rate = 0.05;
  double momentum = 0.5;
  int epochs = 100;
  int batch_size = 128;
  double l2 = 1e-4;
  double hinge_margin = 1.0;
};

struct ForestParams {
  int trees = 100;
  int max_depth = 0;           // 0: grow until pure
  int features_per_split = 0;  // 0: ceil(sqrt(d))
};

struct KnnParams {
  int k = 5;
};

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::softmax;
  SgdParams sgd;
  ForestParams forest;
  KnnParams knn;
  std::uint64_t seed = 0;

  /// Throws BadHyperparams.
  void validate() const;
};

nlohmann::json to_json(const ClassifierSpec& spec);
ClassifierSpec classifier_spec_from_json(const nlohmann::json& j);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;  // majority class at this node
};

/// A fitted classifier. Immutable; predict is safe to call concurrently.
///
/// Linear models (softmax, one-vs-rest SVM) keep one weight row per class in
/// classes_seen(), so argmax can never leave that set.
class TrainedClassifier {
 public:
  struct Linear {
    Eigen::MatrixXd weights;  // |classes_seen| x d
    Eigen::VectorXd bias;
  };
  struct Forest {
    std::vector<std::vector<TreeNode>> trees;
  };
  struct Knn {
    Matrix points;
    std::vector<int> labels;
  };
  using Model = std::variant<Linear, Forest, Knn>;

  TrainedClassifier(ClassifierSpec spec, std::size_t dim, int class_count,
                    std::vector<int> classes_seen, Model model,
                    std::vector<double> loss_trace = {});

  const ClassifierSpec& spec() const noexcept { return spec_; }
  std::size_t dim() const noexcept { return dim_; }
  int class_count() const noexcept { return class_count_; }
  const std::vector<int>& classes_seen() const noexcept { return classes_seen_; }
  const Model& model() const noexcept { return model_; }

  /// Objective value per epoch for SGD-trained kinds (mean of the mini-batch
  /// objectives seen during that epoch; the exact pre-update objective in
  /// full-batch mode). Empty for forest and knn.
  const std::vector<double>& loss_trace() const noexcept { return loss_trace_; }

  /// Throws DimMismatch.
  int predict(std::span<const double> x) const;
  std::vector<int> predict(const LabeledDataset& ds) const;

  /// Linear kinds: raw score per entry of classes_seen().
  std::vector<double> decision_scores(std::span<const double> x) const;

  nlohmann::json to_json() const;
  static TrainedClassifier from_json(const nlohmann::json& j);

 private:
  void check_dim(std::span<const double> x) const;

  ClassifierSpec spec_;
  std::size_t dim_ = 0;
  int class_count_ = 0;
  std::vector<int> classes_seen_;
  Model model_;
  std::vector<double> loss_trace_;
};

/// Train a classifier. Deterministic for a fixed spec.seed.
/// Throws EmptyDataset, BadHyperparams, or DivergenceError.
TrainedClassifier fit(const ClassifierSpec& spec, const LabeledDataset& ds);

/// Number of fit() calls made in this process.
std::uint64_t fit_count() noexcept;

/// Squared Euclidean distance, summed in index order.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Indices of the k nearest rows of `points`, ascending by distance with ties
/// broken by lower index. k larger than the row count is clamped.
IndexList neighbors(const Matrix& points, std::span<const double> x, int k);
IndexList neighbors(const LabeledDataset& ds, std::span<const double> x, int k);

void save_classifier(const std::filesystem::path& path, const TrainedClassifier& clf);
TrainedClassifier load_classifier(const std::filesystem::path& path);

}  // namespace cpc
