#include "cpc/cpc.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>

#include "cpc/error.hpp"
#include "cpc/random.hpp"
#include "json_util.hpp"

namespace cpc {

namespace {
std::atomic<std::uint64_t> g_ensemble_builds{0};
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

std::uint64_t ensemble_build_count() noexcept {
  return g_ensemble_builds.load(std::memory_order_relaxed);
}

std::string_view to_string(Route r) { return r == Route::easy ? "+" : "-"; }

std::string_view to_string(Degenerate d) {
  switch (d) {
    case Degenerate::none: return "none";
    case Degenerate::all_easy: return "all_easy";
    case Degenerate::all_difficult: return "all_difficult";
  }
  return "unknown";
}

BaseEnsemble train_base_ensemble(const LabeledDataset& train, int folds, int repetitions,
                                 const ClassifierSpec& base_spec, std::uint64_t seed,
                                 MemberTraining training) {
  if (folds < 2 || static_cast<std::size_t>(folds) > train.size()) {
    throw Error(ErrorKind::BadK, "fold count " + std::to_string(folds) + " not in [2, " +
                                     std::to_string(train.size()) + "]");
  }
  if (repetitions < 1) throw Error(ErrorKind::BadSpec, "repetitions must be >= 1");
  g_ensemble_builds.fetch_add(1, std::memory_order_relaxed);

  BaseEnsemble ens;
  ens.folds = folds;
  ens.repetitions = repetitions;
  ens.training = training;
  ens.members.reserve(static_cast<std::size_t>(folds * repetitions));
  for (int rep = 0; rep < repetitions; ++rep) {
    const FoldAssignment assignment =
        kfold(train, folds, derive_seed(seed, static_cast<std::uint64_t>(rep)));
    for (int f = 0; f < folds; ++f) {
      IndexList rows = training == MemberTraining::single_fold ? assignment.members(f)
                                                               : assignment.complement(f);
      ClassifierSpec spec = base_spec;
      spec.seed = derive_seed(seed, static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(f) + 1);
      TrainedClassifier clf = fit(spec, train.subset(rows));
      ens.members.push_back({rep, f, std::move(rows), std::move(clf)});
    }
  }
  return ens;
}

EaseScores compute_ease(const BaseEnsemble& ens, const LabeledDataset& train, EaseMode mode) {
  const std::size_t n = train.size();
  EaseScores s;
  s.mode = mode;
  s.ensemble_size = static_cast<int>(ens.size());
  s.correct_counts.assign(n, 0);

  // Each member's training rows, as a membership mask, for exclusion.
  std::vector<std::vector<bool>> in_training;
  if (mode == EaseMode::exclude_in_fold) {
    for (const auto& member : ens.members) {
      std::vector<bool> mask(n, false);
      for (std::size_t i : member.trained_on) {
        if (i >= n) throw Error(ErrorKind::LengthMismatch, "ensemble was built on a larger dataset");
        mask[i] = true;
      }
      in_training.push_back(std::move(mask));
    }
  }

  for (std::size_t k = 0; k < ens.members.size(); ++k) {
    const auto& clf = ens.members[k].classifier;
    for (std::size_t i = 0; i < n; ++i) {
      if (mode == EaseMode::exclude_in_fold && in_training[k][i]) continue;
      if (clf.predict(train.row(i)) == train.label(i)) ++s.correct_counts[i];
    }
  }

  if (mode == EaseMode::include_all) {
    s.denominator = s.ensemble_size;
  } else {
    // Members per repetition whose training data holds a given sample.
    const int per_rep = ens.training == MemberTraining::single_fold ? 1 : ens.folds - 1;
    s.denominator = s.ensemble_size - ens.repetitions * per_rep;
  }
  s.ratios.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.ratios[i] = s.denominator > 0
                      ? static_cast<double>(s.correct_counts[i]) / static_cast<double>(s.denominator)
                      : 0.0;
  }
  return s;
}

SubspacePartition partition(const LabeledDataset& train, const EaseScores& ease, double theta) {
  if (ease.ratios.size() != train.size()) {
    throw Error(ErrorKind::LengthMismatch, "ease scores cover " + std::to_string(ease.ratios.size()) +
                                               " samples, dataset has " + std::to_string(train.size()));
  }
  if (std::isnan(theta)) throw Error(ErrorKind::BadSpec, "theta is NaN");
  SubspacePartition part;
  part.theta = theta;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (ease.ratios[i] >= theta ? part.easy : part.difficult).push_back(i);
  }
  return part;
}

ClassifierSpec default_discriminator_spec() {
  ClassifierSpec spec;
  spec.kind = ClassifierKind::softmax;
  spec.sgd.batch_size = 0;
  spec.sgd.epochs = 200;
  spec.sgd.l2 = 1e-2;
  return spec;
}

// --- model ----------------------------------------------------------------

CpcModel::CpcModel(std::optional<TrainedClassifier> easy_expert,
                   std::optional<TrainedClassifier> difficult_expert, Matrix pooled_points,
                   std::vector<Route> pooled_routes, double theta, CpcParams params)
    : easy_(std::move(easy_expert)),
      difficult_(std::move(difficult_expert)),
      points_(std::move(pooled_points)),
      routes_(std::move(pooled_routes)),
      theta_(theta),
      params_(params) {
  if (!easy_ && !difficult_) throw Error(ErrorKind::EmptyPartition, "both subspaces are empty");
  if (static_cast<std::size_t>(points_.rows()) != routes_.size()) {
    throw Error(ErrorKind::LengthMismatch, "pooled points and routes differ in length");
  }
  if (params_.disc_k < 1) throw Error(ErrorKind::BadHyperparams, "disc_k must be >= 1");
  params_.discriminator.validate();
  if (!difficult_) {
    degenerate_ = Degenerate::all_easy;
  } else if (!easy_) {
    degenerate_ = Degenerate::all_difficult;
  }
}

nlohmann::json CpcModel::to_json() const {
  nlohmann::json routes = nlohmann::json::array();
  for (Route r : routes_) routes.push_back(to_string(r));
  return {{"theta", theta_},
          {"degenerate", to_string(degenerate_)},
          {"disc_k", params_.disc_k},
          {"discriminator", cpc::to_json(params_.discriminator)},
          {"seed", params_.seed},
          {"easy_expert", easy_ ? easy_->to_json() : nlohmann::json(nullptr)},
          {"difficult_expert", difficult_ ? difficult_->to_json() : nlohmann::json(nullptr)},
          {"pooled_points", detail::matrix_to_json(points_)},
          {"pooled_labels", routes}};
}

CpcModel CpcModel::from_json(const nlohmann::json& j) {
  try {
    auto expert = [&](const char* key) -> std::optional<TrainedClassifier> {
      const auto& e = j.at(key);
      if (e.is_null()) return std::nullopt;
      return TrainedClassifier::from_json(e);
    };
    auto easy = expert("easy_expert");
    auto difficult = expert("difficult_expert");
    const std::size_t dim = easy ? easy->dim() : difficult ? difficult->dim() : 0;
    Matrix points = detail::matrix_from_json<Matrix>(j.at("pooled_points"), static_cast<Eigen::Index>(dim));
    std::vector<Route> routes;
    for (const auto& r : j.at("pooled_labels")) {
      const auto s = r.get<std::string>();
      if (s != "+" && s != "-") throw Error(ErrorKind::Format, "pooled label must be '+' or '-'");
      routes.push_back(s == "+" ? Route::easy : Route::difficult);
    }
    CpcParams params{j.at("disc_k").get<int>(), classifier_spec_from_json(j.at("discriminator")),
                     j.at("seed").get<std::uint64_t>()};
    return {std::move(easy), std::move(difficult), std::move(points), std::move(routes),
            j.at("theta").get<double>(), params};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("cpc model: ") + e.what());
  }
}

CpcModel fit_cpc(const LabeledDataset& train, const SubspacePartition& part,
                 const ClassifierSpec& expert_spec, const CpcParams& params) {
  if (part.easy.empty() && part.difficult.empty()) {
    throw Error(ErrorKind::EmptyPartition, "both subspaces are empty");
  }
  if (part.easy.size() + part.difficult.size() != train.size()) {
    throw Error(ErrorKind::LengthMismatch, "partition does not cover the training set");
  }
  std::optional<TrainedClassifier> easy, difficult;
  if (!part.easy.empty()) easy = fit(expert_spec, train.subset(part.easy));
  if (!part.difficult.empty()) difficult = fit(expert_spec, train.subset(part.difficult));

  std::vector<Route> routes(train.size(), Route::easy);
  for (std::size_t i : part.difficult) routes[i] = Route::difficult;
  return {std::move(easy), std::move(difficult), train.features(), std::move(routes), part.theta,
          params};
}

Discrimination discriminate(const CpcModel& model, std::span<const double> x) {
  if (model.degenerate() != Degenerate::none) {
    throw Error(ErrorKind::DegenerateModel, "model has an empty subspace; route directly");
  }
  const IndexList near = neighbors(model.pooled_points(), x, model.params().disc_k);
  const auto& routes = model.pooled_routes();
  const Route first = routes[near.front()];
  bool unanimous = true;
  for (std::size_t i : near) unanimous = unanimous && routes[i] == first;
  if (unanimous) return {first, first == Route::easy ? kInf : -kInf, true};

  // Local problem, centred on the neighbourhood mean: 0 = difficult, 1 = easy.
  const auto d = static_cast<Eigen::Index>(model.dim());
  Matrix local(static_cast<Eigen::Index>(near.size()), d);
  std::vector<int> labels(near.size());
  for (std::size_t r = 0; r < near.size(); ++r) {
    local.row(static_cast<Eigen::Index>(r)) = model.pooled_points().row(static_cast<Eigen::Index>(near[r]));
    labels[r] = routes[near[r]] == Route::easy ? 1 : 0;
  }
  const Eigen::RowVectorXd centre = local.colwise().mean();
  local.rowwise() -= centre;
  std::vector<double> query(x.begin(), x.end());
  for (Eigen::Index c = 0; c < d; ++c) query[static_cast<std::size_t>(c)] -= centre(c);

  ClassifierSpec spec = model.params().discriminator;
  spec.seed = derive_seed(model.params().seed, hash_bytes(std::as_bytes(x)));
  const TrainedClassifier psi = fit(spec, LabeledDataset(std::move(local), std::move(labels), 2));
  const auto scores = psi.decision_scores(query);
  const double margin = scores[1] - scores[0];
  return {margin >= 0 ? Route::easy : Route::difficult, margin, false};
}

RoutedPrediction cpc_predict(const CpcModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw Error(ErrorKind::DimMismatch, "query has dimension " + std::to_string(x.size()) +
                                            ", model expects " + std::to_string(model.dim()));
  }
  switch (model.degenerate()) {
    case Degenerate::all_easy:
      return {Route::easy, model.easy_expert()->predict(x), kInf};
    case Degenerate::all_difficult:
      return {Route::difficult, model.difficult_expert()->predict(x), -kInf};
    case Degenerate::none:
      break;
  }
  const Discrimination d = discriminate(model, x);
  const auto& expert = d.route == Route::easy ? model.easy_expert() : model.difficult_expert();
  return {d.route, expert->predict(x), d.margin};
}

std::vector<RoutedPrediction> cpc_predict(const CpcModel& model, const LabeledDataset& ds) {
  std::vector<RoutedPrediction> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(cpc_predict(model, ds.row(i)));
  return out;
}

nlohmann::json to_json(const CpcConfig& cfg) {
  return {{"folds", cfg.folds},
          {"repetitions", cfg.repetitions},
          {"base", to_json(cfg.base)},
          {"expert", to_json(cfg.expert)},
          {"theta", cfg.theta},
          {"disc_k", cfg.routing.disc_k},
          {"discriminator", to_json(cfg.routing.discriminator)},
          {"routing_seed", cfg.routing.seed},
          {"member_training",
           cfg.training == MemberTraining::single_fold ? "single_fold" : "complement_folds"},
          {"ease_mode", cfg.ease_mode == EaseMode::include_all ? "include_all" : "exclude_in_fold"},
          {"seed", cfg.seed}};
}

CpcModel train_cpc(const LabeledDataset& train, const CpcConfig& cfg) {
  const BaseEnsemble ens =
      train_base_ensemble(train, cfg.folds, cfg.repetitions, cfg.base, cfg.seed, cfg.training);
  const EaseScores ease = compute_ease(ens, train, cfg.ease_mode);
  return fit_cpc(train, partition(train, ease, cfg.theta), cfg.expert, cfg.routing);
}

void save_cpc(const std::filesystem::path& path, const CpcModel& model) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << model.to_json().dump() << '\n';
}

CpcModel load_cpc(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return CpcModel::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Format, e.what());
  }
}

}  // namespace cpc
