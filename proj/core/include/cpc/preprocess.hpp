#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "cpc/dataset.hpp"

namespace cpc {

inline constexpr double kDefaultZcaEpsilon = 1e-6;
inline constexpr double kDefaultNormEpsilon = 1e-8;

/// Per-sample contrast normalization: each row becomes
/// (x - mean(x)) / max(std(x), eps_norm), statistics taken over that row's
/// components with divisor d.
LabeledDataset normalize_samples(const LabeledDataset& ds, double eps_norm = kDefaultNormEpsilon);

/// Per-feature standardization fitted on one dataset and applied to others.
struct FeatureScaler {
  Vector mean;
  Vector scale;
};

FeatureScaler fit_feature_scaler(const LabeledDataset& ds, double eps_norm = kDefaultNormEpsilon);
LabeledDataset apply_feature_scaler(const FeatureScaler& s, const LabeledDataset& ds);

/// ZCA whitening x -> W (x - mean) with W = U (L + eps I)^(-1/2) U^T.
struct WhiteningTransform {
  Vector mean;
  Eigen::MatrixXd rotation;
  double epsilon = kDefaultZcaEpsilon;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

/// Covariance uses divisor n-1; negative eigenvalues from round-off are clamped to 0.
WhiteningTransform fit_zca(const LabeledDataset& ds, double epsilon = kDefaultZcaEpsilon);
LabeledDataset apply_whitening(const WhiteningTransform& t, const LabeledDataset& ds);

nlohmann::json to_json(const WhiteningTransform& t);
WhiteningTransform whitening_from_json(const nlohmann::json& j);
void save_whitening(const std::filesystem::path& path, const WhiteningTransform& t);
WhiteningTransform load_whitening(const std::filesystem::path& path);

}  // namespace cpc
