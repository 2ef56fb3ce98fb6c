#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpc/classifiers.hpp"
#include "cpc/cpc.hpp"
#include "cpc/dataset.hpp"
#include "cpc/mlp.hpp"

namespace cpc {

/// Rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes = 0);

  int classes() const noexcept { return classes_; }
  std::int64_t at(int truth, int predicted) const;
  void add(int truth, int predicted);

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int truth) const;
  /// Empty rows stay empty (nullopt) rather than becoming zeros.
  std::vector<std::optional<std::vector<double>>> row_normalized() const;

  nlohmann::json to_json() const;

 private:
  int classes_ = 0;
  std::vector<std::int64_t> counts_;
};

struct RouteStats {
  std::size_t easy = 0;
  std::size_t difficult = 0;
  std::optional<double> easy_accuracy;
  std::optional<double> difficult_accuracy;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from truth
  ConfusionMatrix confusion;
  std::optional<RouteStats> routes;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// {"accuracy", "per_class", "confusion", "routes", "config", "seed"}
  nlohmann::json to_json() const;
};

/// Throws LengthMismatch or LabelOutOfRange.
EvalReport evaluate(std::span<const int> predictions, std::span<const int> truth, int classes);
EvalReport evaluate(std::span<const RoutedPrediction> predictions, std::span<const int> truth,
                    int classes);

// --- pipelines ------------------------------------------------------------

enum class Normalization { none, per_sample, per_feature };
enum class PipelineMode { baseline, cpc };

std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view name);

struct ExtractorConfig {
  std::string architecture;  // "in:..." is rewritten to the actual input width
  TrainConfig training;
  int feature_tap = -1;
};

struct PipelineConfig {
  Normalization normalization = Normalization::none;
  double norm_epsilon = 1e-8;
  bool zca = false;
  double zca_epsilon = 1e-6;
  std::optional<ExtractorConfig> extractor;
  PipelineMode mode = PipelineMode::baseline;
  /// cpc.expert is also the baseline classifier.
  CpcConfig cpc;
};

nlohmann::json to_json(const PipelineConfig& cfg);

struct PreparedData {
  LabeledDataset train;
  std::vector<LabeledDataset> others;
};

/// Fits preprocessing (and the optional extractor) on `train` only, then
/// applies the same transforms to every dataset in `others`.
PreparedData prepare(const LabeledDataset& train, std::span<const LabeledDataset> others,
                     const PipelineConfig& cfg);

/// Prepare, fit baseline or CPC on train, evaluate on test.
EvalReport run_pipeline(const LabeledDataset& train, const LabeledDataset& test,
                        const PipelineConfig& cfg);

struct CvReport {
  std::vector<EvalReport> folds;
  EvalReport pooled;  // every held-out prediction in one report
  std::vector<IndexList> test_indices;  // held-out samples of each fold
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation over folds
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// The pooled report's keys plus "mean_accuracy", "std_accuracy" and "folds".
  nlohmann::json to_json() const;
};

/// Sums confusion and route counts of reports over disjoint test sets.
EvalReport pool_reports(std::span<const EvalReport> reports);

CvReport cross_validate(const LabeledDataset& ds, const PipelineConfig& cfg, int folds,
                        std::uint64_t seed);

// --- threshold sweep ------------------------------------------------------

struct SweepResult {
  std::vector<double> thetas;
  std::vector<double> accuracies;
  double baseline_accuracy = 0.0;
  double best_theta = 0.0;
  double best_accuracy = 0.0;
  EvalReport best_report;  // validation report at best_theta
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// The best report's keys plus a "sweep" object holding the curve.
  nlohmann::json to_json() const;
  /// "theta,accuracy,baseline" rows.
  void write_curve_csv(std::ostream& out) const;
};

/// "lo:hi:step", inclusive of hi; values rounded to 12 decimals.
std::vector<double> parse_grid(std::string_view text);
std::vector<double> default_theta_grid();

/// The ensemble and ease scores are computed once; only partition, experts
/// and evaluation are repeated per grid point. Ties go to the smaller theta.
SweepResult theta_sweep(const LabeledDataset& train, const LabeledDataset& validation,
                        std::span<const double> grid, const CpcConfig& cfg);

// --- baseline vs CPC ------------------------------------------------------

struct ComparisonRow {
  ClassifierSpec spec;
  double baseline_accuracy = 0.0;
  double cpc_accuracy = 0.0;
  std::vector<std::optional<double>> per_class_delta;  // cpc - baseline

  double difference() const { return cpc_accuracy - baseline_accuracy; }
};

/// For each spec: baseline on the full training set and CPC using the spec as
/// both base learner and expert (seeds kept from the spec).
std::vector<ComparisonRow> compare(const LabeledDataset& train, const LabeledDataset& test,
                                   std::span<const ClassifierSpec> specs, const CpcConfig& cfg);

nlohmann::json to_json(std::span<const ComparisonRow> rows, const CpcConfig& cfg);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace cpc
