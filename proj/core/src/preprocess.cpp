#include "cpc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Eigenvalues>

#include "cpc/error.hpp"

namespace cpc {

LabeledDataset normalize_samples(const LabeledDataset& ds, double eps_norm) {
  if (!(eps_norm > 0)) throw Error(ErrorKind::BadSpec, "eps_norm must be positive");
  Matrix x = ds.features();
  const double d = static_cast<double>(ds.dim());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    const double mean = row.sum() / d;
    row.array() -= mean;
    const double sd = std::sqrt(row.squaredNorm() / d);
    row /= std::max(sd, eps_norm);
  }
  return ds.with_features(std::move(x));
}

FeatureScaler fit_feature_scaler(const LabeledDataset& ds, double eps_norm) {
  if (ds.empty()) throw Error(ErrorKind::EmptyDataset, "cannot fit a scaler on no samples");
  if (!(eps_norm > 0)) throw Error(ErrorKind::BadSpec, "eps_norm must be positive");
  const auto& x = ds.features();
  FeatureScaler s;
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().mean();
    s.scale(j) = std::max(std::sqrt(var), eps_norm);
  }
  return s;
}

LabeledDataset apply_feature_scaler(const FeatureScaler& s, const LabeledDataset& ds) {
  if (static_cast<std::size_t>(s.mean.size()) != ds.dim()) {
    throw Error(ErrorKind::DimMismatch, "scaler dimension differs from dataset");
  }
  Matrix x = ds.features();
  x.rowwise() -= s.mean.transpose();
  x.array().rowwise() /= s.scale.transpose().array();
  return ds.with_features(std::move(x));
}

WhiteningTransform fit_zca(const LabeledDataset& ds, double epsilon) {
  if (ds.size() < 2) throw Error(ErrorKind::TooFewSamples, "ZCA needs at least two samples");
  if (!(epsilon > 0)) throw Error(ErrorKind::BadSpec, "ZCA epsilon must be positive");

  WhiteningTransform t;
  t.epsilon = epsilon;
  t.mean = ds.features().colwise().mean().transpose();
  const Eigen::MatrixXd centered = ds.features().rowwise() - t.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(ds.size() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorKind::Divergence, "covariance eigendecomposition failed");
  }
  const Eigen::VectorXd inv_sqrt =
      (eig.eigenvalues().array().max(0.0) + epsilon).rsqrt().matrix();
  const Eigen::MatrixXd& u = eig.eigenvectors();
  Eigen::MatrixXd w = u * inv_sqrt.asDiagonal() * u.transpose();
  t.rotation = 0.5 * (w + w.transpose());
  return t;
}

LabeledDataset apply_whitening(const WhiteningTransform& t, const LabeledDataset& ds) {
  if (t.dim() != ds.dim()) {
    throw Error(ErrorKind::DimMismatch, "whitening transform has dimension " +
                                            std::to_string(t.dim()) + ", dataset has " +
                                            std::to_string(ds.dim()));
  }
  Matrix centered = ds.features().rowwise() - t.mean.transpose();
  Matrix out = centered * t.rotation.transpose();
  return ds.with_features(std::move(out));
}

nlohmann::json to_json(const WhiteningTransform& t) {
  nlohmann::json rot = nlohmann::json::array();
  for (Eigen::Index i = 0; i < t.rotation.rows(); ++i) {
    std::vector<double> row(t.rotation.cols());
    for (Eigen::Index j = 0; j < t.rotation.cols(); ++j) row[static_cast<std::size_t>(j)] = t.rotation(i, j);
    rot.push_back(row);
  }
  return {{"mean", std::vector<double>(t.mean.data(), t.mean.data() + t.mean.size())},
          {"rotation", rot},
          {"epsilon", t.epsilon}};
}

WhiteningTransform whitening_from_json(const nlohmann::json& j) {
  try {
    WhiteningTransform t;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto rot = j.at("rotation").get<std::vector<std::vector<double>>>();
    t.epsilon = j.at("epsilon").get<double>();
    const auto d = static_cast<Eigen::Index>(mean.size());
    t.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
    if (static_cast<Eigen::Index>(rot.size()) != d) {
      throw Error(ErrorKind::DimMismatch, "rotation row count differs from mean length");
    }
    t.rotation.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (static_cast<Eigen::Index>(rot[static_cast<std::size_t>(i)].size()) != d) {
        throw Error(ErrorKind::DimMismatch, "rotation is not square");
      }
      for (Eigen::Index k = 0; k < d; ++k) t.rotation(i, k) = rot[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("whitening transform: ") + e.what());
  }
}

void save_whitening(const std::filesystem::path& path, const WhiteningTransform& t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << to_json(t).dump(2) << '\n';
}

WhiteningTransform load_whitening(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return whitening_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Format, e.what());
  }
}

}  // namespace cpc
