#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpc/classifiers.hpp"
#include "cpc/dataset.hpp"

namespace cpc {

// Complexity perception classification.
//
// A base ensemble of N = K*m weak classifiers scores how easy each training
// sample is (the fraction of members that classify it correctly). A threshold
// splits the training set into an easy and a difficult subspace, one expert is
// trained on each, and every query is routed by a small softmax fitted on the
// query's nearest training points labelled easy (+) or difficult (-).

/// single_fold trains each member on one fold and lets it vote on the other
/// K-1; complement_folds trains each member on K-1 folds.
enum class MemberTraining { single_fold, complement_folds };

/// include_all counts every member's vote (denominator N); exclude_in_fold
/// skips members whose training data contained the sample.
enum class EaseMode { include_all, exclude_in_fold };

struct EnsembleMember {
  int repetition = 0;
  int fold = 0;
  IndexList trained_on;  // ascending sample indices
  TrainedClassifier classifier;
};

struct BaseEnsemble {
  int folds = 0;        // K
  int repetitions = 0;  // m
  MemberTraining training = MemberTraining::single_fold;
  std::vector<EnsembleMember> members;

  std::size_t size() const noexcept { return members.size(); }
};

/// One fresh seeded K-fold partition per repetition, one member per fold.
/// Throws BadK (K < 2 or K > n) or BadSpec (m < 1).
BaseEnsemble train_base_ensemble(const LabeledDataset& train, int folds, int repetitions,
                                 const ClassifierSpec& base_spec, std::uint64_t seed,
                                 MemberTraining training = MemberTraining::single_fold);

/// Number of train_base_ensemble() calls made in this process.
std::uint64_t ensemble_build_count() noexcept;

struct EaseScores {
  std::vector<int> correct_counts;
  std::vector<double> ratios;
  int ensemble_size = 0;
  int denominator = 0;
  EaseMode mode = EaseMode::include_all;
};

EaseScores compute_ease(const BaseEnsemble& ens, const LabeledDataset& train,
                        EaseMode mode = EaseMode::include_all);

struct SubspacePartition {
  double theta = 0.0;
  IndexList easy;       // R >= theta
  IndexList difficult;  // R < theta
};

/// Throws LengthMismatch when the scores and dataset sizes differ.
SubspacePartition partition(const LabeledDataset& train, const EaseScores& ease, double theta);

enum class Route { easy, difficult };
enum class Degenerate { none, all_easy, all_difficult };

std::string_view to_string(Route r);
std::string_view to_string(Degenerate d);

/// Defaults for the per-query discriminator: full-batch softmax, 200 epochs, L2 1e-2.
ClassifierSpec default_discriminator_spec();

struct CpcParams {
  int disc_k = 25;
  ClassifierSpec discriminator = default_discriminator_spec();
  std::uint64_t seed = 0;
};

class CpcModel {
 public:
  CpcModel(std::optional<TrainedClassifier> easy_expert,
           std::optional<TrainedClassifier> difficult_expert, Matrix pooled_points,
           std::vector<Route> pooled_routes, double theta, CpcParams params);

  const std::optional<TrainedClassifier>& easy_expert() const noexcept { return easy_; }
  const std::optional<TrainedClassifier>& difficult_expert() const noexcept { return difficult_; }
  const Matrix& pooled_points() const noexcept { return points_; }
  const std::vector<Route>& pooled_routes() const noexcept { return routes_; }
  double theta() const noexcept { return theta_; }
  const CpcParams& params() const noexcept { return params_; }
  Degenerate degenerate() const noexcept { return degenerate_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }

  nlohmann::json to_json() const;
  static CpcModel from_json(const nlohmann::json& j);

 private:
  std::optional<TrainedClassifier> easy_;
  std::optional<TrainedClassifier> difficult_;
  Matrix points_;
  std::vector<Route> routes_;
  double theta_ = 0.0;
  CpcParams params_;
  Degenerate degenerate_ = Degenerate::none;
};

/// Trains the easy and difficult experts with `expert_spec` (seed used as-is)
/// on whichever subspaces are non-empty. Throws EmptyPartition when both are empty.
CpcModel fit_cpc(const LabeledDataset& train, const SubspacePartition& part,
                 const ClassifierSpec& expert_spec, const CpcParams& params);

struct Discrimination {
  Route route = Route::easy;
  double margin = 0.0;     // score(+) - score(-); +-inf when the neighborhood is unanimous
  bool unanimous = false;  // no local model was fitted
};

/// Throws DegenerateModel when one subspace is empty, DimMismatch on width.
Discrimination discriminate(const CpcModel& model, std::span<const double> x);

struct RoutedPrediction {
  Route route = Route::easy;
  int label = 0;
  double margin = 0.0;
};

RoutedPrediction cpc_predict(const CpcModel& model, std::span<const double> x);
std::vector<RoutedPrediction> cpc_predict(const CpcModel& model, const LabeledDataset& ds);

/// Everything needed to go from a training set to a fitted CpcModel.
struct CpcConfig {
  int folds = 5;
  int repetitions = 3;
  ClassifierSpec base;
  ClassifierSpec expert;
  double theta = 0.5;
  CpcParams routing;
  MemberTraining training = MemberTraining::single_fold;
  EaseMode ease_mode = EaseMode::include_all;
  std::uint64_t seed = 0;  // seeds the ensemble folds and members
};

nlohmann::json to_json(const CpcConfig& cfg);

/// Ensemble, ease scores, partition and experts in one call.
CpcModel train_cpc(const LabeledDataset& train, const CpcConfig& cfg);

void save_cpc(const std::filesystem::path& path, const CpcModel& model);
CpcModel load_cpc(const std::filesystem::path& path);

}  // namespace cpc
