#include "cpc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cpc/error.hpp"
#include "cpc/preprocess.hpp"

namespace cpc {

// --- confusion ------------------------------------------------------------

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {}

std::int64_t ConfusionMatrix::at(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

void ConfusionMatrix::add(int truth, int predicted) {
  ++counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int truth) const {
  std::int64_t s = 0;
  for (int c = 0; c < classes_; ++c) s += at(truth, c);
  return s;
}

std::vector<std::optional<std::vector<double>>> ConfusionMatrix::row_normalized() const {
  std::vector<std::optional<std::vector<double>>> out(static_cast<std::size_t>(classes_));
  for (int r = 0; r < classes_; ++r) {
    const std::int64_t sum = row_sum(r);
    if (sum == 0) continue;
    std::vector<double> row(static_cast<std::size_t>(classes_));
    for (int c = 0; c < classes_; ++c) {
      row[static_cast<std::size_t>(c)] = static_cast<double>(at(r, c)) / static_cast<double>(sum);
    }
    out[static_cast<std::size_t>(r)] = std::move(row);
  }
  return out;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < classes_; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < classes_; ++c) row.push_back(at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json optional_list(const std::vector<std::optional<double>>& values) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : values) out.push_back(optional_json(v));
  return out;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json routes_json = nullptr;
  if (routes) {
    routes_json = {{"+", routes->easy},
                   {"-", routes->difficult},
                   {"acc+", optional_json(routes->easy_accuracy)},
                   {"acc-", optional_json(routes->difficult_accuracy)}};
  }
  return {{"accuracy", accuracy},
          {"per_class", optional_list(per_class)},
          {"confusion", confusion.to_json()},
          {"routes", routes_json},
          {"config", config},
          {"seed", seed}};
}

EvalReport evaluate(std::span<const int> predictions, std::span<const int> truth, int classes) {
  if (predictions.size() != truth.size()) {
    throw Error(ErrorKind::LengthMismatch, "predictions and truth differ in length");
  }
  if (classes < 1) throw Error(ErrorKind::BadSpec, "class count must be >= 1");
  EvalReport r;
  r.confusion = ConfusionMatrix(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predictions[i] < 0 || predictions[i] >= classes) {
      throw Error(ErrorKind::LabelOutOfRange, "label outside [0, " + std::to_string(classes) + ")");
    }
    r.confusion.add(truth[i], predictions[i]);
  }
  const auto total = r.confusion.total();
  r.accuracy = total == 0 ? 0.0 : static_cast<double>(r.confusion.trace()) / static_cast<double>(total);
  for (int c = 0; c < classes; ++c) {
    const auto sum = r.confusion.row_sum(c);
    r.per_class.push_back(sum == 0 ? std::nullopt
                                   : std::optional<double>(static_cast<double>(r.confusion.at(c, c)) /
                                                           static_cast<double>(sum)));
  }
  return r;
}

EvalReport evaluate(std::span<const RoutedPrediction> predictions, std::span<const int> truth,
                    int classes) {
  std::vector<int> labels(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) labels[i] = predictions[i].label;
  EvalReport r = evaluate(labels, truth, classes);
  RouteStats stats;
  std::size_t easy_ok = 0, difficult_ok = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool ok = predictions[i].label == truth[i];
    if (predictions[i].route == Route::easy) {
      ++stats.easy;
      easy_ok += ok;
    } else {
      ++stats.difficult;
      difficult_ok += ok;
    }
  }
  if (stats.easy > 0) stats.easy_accuracy = static_cast<double>(easy_ok) / static_cast<double>(stats.easy);
  if (stats.difficult > 0) {
    stats.difficult_accuracy = static_cast<double>(difficult_ok) / static_cast<double>(stats.difficult);
  }
  r.routes = stats;
  return r;
}

// --- pipelines ------------------------------------------------------------

std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::per_sample: return "sample";
    case Normalization::per_feature: return "feature";
  }
  return "unknown";
}

Normalization parse_normalization(std::string_view name) {
  if (name == "none") return Normalization::none;
  if (name == "sample") return Normalization::per_sample;
  if (name == "feature") return Normalization::per_feature;
  throw Error(ErrorKind::BadSpec, "unknown normalization '" + std::string(name) + "'");
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json j{{"normalization", to_string(cfg.normalization)},
                   {"norm_epsilon", cfg.norm_epsilon},
                   {"zca", cfg.zca},
                   {"zca_epsilon", cfg.zca_epsilon},
                   {"mode", cfg.mode == PipelineMode::baseline ? "baseline" : "cpc"},
                   {"extractor", nullptr}};
  if (cfg.extractor) {
    j["extractor"] = {{"architecture", cfg.extractor->architecture},
                      {"training", to_json(cfg.extractor->training)},
                      {"feature_tap", cfg.extractor->feature_tap}};
  }
  if (cfg.mode == PipelineMode::baseline) {
    j["classifier"] = to_json(cfg.cpc.expert);
  } else {
    j["cpc"] = to_json(cfg.cpc);
  }
  return j;
}

PreparedData prepare(const LabeledDataset& train, std::span<const LabeledDataset> others,
                     const PipelineConfig& cfg) {
  PreparedData out{train, {others.begin(), others.end()}};
  auto each = [&out](auto&& transform) {
    out.train = transform(out.train);
    for (auto& ds : out.others) ds = transform(ds);
  };

  switch (cfg.normalization) {
    case Normalization::none:
      break;
    case Normalization::per_sample:
      each([&](const LabeledDataset& ds) { return normalize_samples(ds, cfg.norm_epsilon); });
      break;
    case Normalization::per_feature: {
      const FeatureScaler scaler = fit_feature_scaler(out.train, cfg.norm_epsilon);
      each([&](const LabeledDataset& ds) { return apply_feature_scaler(scaler, ds); });
      break;
    }
  }
  if (cfg.zca) {
    const WhiteningTransform t = fit_zca(out.train, cfg.zca_epsilon);
    each([&](const LabeledDataset& ds) { return apply_whitening(t, ds); });
  }
  if (cfg.extractor) {
    Architecture arch = parse_architecture(cfg.extractor->architecture);
    arch.input_width = static_cast<int>(out.train.dim());
    arch.classes = out.train.class_count();
    const MlpModel init = MlpModel::create(arch, cfg.extractor->training.seed, Activation::relu,
                                           cfg.extractor->feature_tap);
    const MlpModel model = cpc::train(init, out.train, cfg.extractor->training).model;
    each([&](const LabeledDataset& ds) { return extract_features(model, ds); });
  }
  return out;
}

EvalReport run_pipeline(const LabeledDataset& train, const LabeledDataset& test,
                        const PipelineConfig& cfg) {
  const LabeledDataset others[] = {test};
  const PreparedData data = prepare(train, others, cfg);
  const LabeledDataset& tr = data.train;
  const LabeledDataset& te = data.others.front();

  EvalReport report;
  if (cfg.mode == PipelineMode::baseline) {
    const TrainedClassifier clf = fit(cfg.cpc.expert, tr);
    report = evaluate(clf.predict(te), te.labels(), te.class_count());
  } else {
    const CpcModel model = train_cpc(tr, cfg.cpc);
    const auto preds = cpc_predict(model, te);
    report = evaluate(preds, te.labels(), te.class_count());
  }
  report.config = to_json(cfg);
  report.seed = cfg.cpc.seed;
  return report;
}

nlohmann::json CvReport::to_json() const {
  nlohmann::json fold_reports = nlohmann::json::array();
  for (const auto& f : folds) fold_reports.push_back(f.to_json());
  nlohmann::json j = pooled.to_json();
  j["config"] = config;
  j["seed"] = seed;
  j["mean_accuracy"] = mean_accuracy;
  j["std_accuracy"] = std_accuracy;
  j["folds"] = fold_reports;
  return j;
}

EvalReport pool_reports(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error(ErrorKind::BadSpec, "no reports to pool");
  const int classes = reports.front().confusion.classes();
  std::vector<int> truth, predicted;
  std::optional<RouteStats> routes;
  double easy_ok = 0.0, difficult_ok = 0.0;
  for (const auto& r : reports) {
    if (r.confusion.classes() != classes) {
      throw Error(ErrorKind::LengthMismatch, "reports disagree on the class count");
    }
    for (int t = 0; t < classes; ++t)
      for (int p = 0; p < classes; ++p)
        for (std::int64_t k = 0; k < r.confusion.at(t, p); ++k) {
          truth.push_back(t);
          predicted.push_back(p);
        }
    if (r.routes) {
      if (!routes) routes.emplace();
      routes->easy += r.routes->easy;
      routes->difficult += r.routes->difficult;
      easy_ok += std::round(r.routes->easy_accuracy.value_or(0.0) * static_cast<double>(r.routes->easy));
      difficult_ok +=
          std::round(r.routes->difficult_accuracy.value_or(0.0) * static_cast<double>(r.routes->difficult));
    }
  }
  EvalReport out = evaluate(predicted, truth, classes);
  if (routes) {
    if (routes->easy > 0) routes->easy_accuracy = easy_ok / static_cast<double>(routes->easy);
    if (routes->difficult > 0) routes->difficult_accuracy = difficult_ok / static_cast<double>(routes->difficult);
    out.routes = routes;
  }
  return out;
}

CvReport cross_validate(const LabeledDataset& ds, const PipelineConfig& cfg, int folds,
                        std::uint64_t seed) {
  const FoldAssignment assignment = kfold(ds, folds, seed);
  CvReport out;
  out.seed = seed;
  out.config = to_json(cfg);
  out.config["folds"] = folds;
  std::vector<double> accuracies;
  for (int f = 0; f < folds; ++f) {
    IndexList held_out = assignment.members(f);
    EvalReport r = run_pipeline(ds.subset(assignment.complement(f)), ds.subset(held_out), cfg);
    accuracies.push_back(r.accuracy);
    out.folds.push_back(std::move(r));
    out.test_indices.push_back(std::move(held_out));
  }
  const double k = static_cast<double>(accuracies.size());
  out.mean_accuracy = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / k;
  double ss = 0.0;
  for (double a : accuracies) ss += (a - out.mean_accuracy) * (a - out.mean_accuracy);
  out.std_accuracy = std::sqrt(ss / (k - 1.0));
  out.pooled = pool_reports(out.folds);
  out.pooled.config = out.config;
  out.pooled.seed = seed;
  return out;
}

// --- threshold sweep ------------------------------------------------------

namespace {

double round12(double v) { return std::round(v * 1e12) / 1e12; }

double accuracy_of(const std::vector<int>& preds, const LabeledDataset& ds) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) ok += preds[i] == ds.label(i);
  return ds.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(ds.size());
}

}  // namespace

std::vector<double> parse_grid(std::string_view text) {
  double lo = 0, hi = 0, step = 0;
  char c1 = 0, c2 = 0;
  std::istringstream in{std::string(text)};
  if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof() ||
      !(step > 0) || hi < lo) {
    throw Error(ErrorKind::BadSpec, "grid must look like lo:hi:step with step > 0 and hi >= lo");
  }
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (long i = 0; i < count; ++i) grid.push_back(round12(lo + static_cast<double>(i) * step));
  return grid;
}

std::vector<double> default_theta_grid() { return parse_grid("0.0:1.0:0.1"); }

nlohmann::json SweepResult::to_json() const {
  nlohmann::json j = best_report.to_json();
  j["config"] = config;
  j["seed"] = seed;
  j["sweep"] = {{"thetas", thetas},
                {"accuracies", accuracies},
                {"baseline_accuracy", baseline_accuracy},
                {"best_theta", best_theta},
                {"best_accuracy", best_accuracy}};
  return j;
}

void SweepResult::write_curve_csv(std::ostream& out) const {
  out << "theta,accuracy,baseline\n";
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    out << nlohmann::json(thetas[i]).dump() << ',' << nlohmann::json(accuracies[i]).dump() << ','
        << nlohmann::json(baseline_accuracy).dump() << '\n';
  }
}

SweepResult theta_sweep(const LabeledDataset& train, const LabeledDataset& validation,
                        std::span<const double> grid, const CpcConfig& cfg) {
  if (grid.empty()) throw Error(ErrorKind::BadSpec, "theta grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw Error(ErrorKind::BadSpec, "theta grid must be sorted ascending");
  }
  const BaseEnsemble ens =
      train_base_ensemble(train, cfg.folds, cfg.repetitions, cfg.base, cfg.seed, cfg.training);
  const EaseScores ease = compute_ease(ens, train, cfg.ease_mode);

  SweepResult out;
  out.seed = cfg.seed;
  out.config = to_json(cfg);
  out.baseline_accuracy = accuracy_of(fit(cfg.expert, train).predict(validation), validation);
  const int classes = std::max(train.class_count(), validation.class_count());
  for (double theta : grid) {
    const CpcModel model = fit_cpc(train, partition(train, ease, theta), cfg.expert, cfg.routing);
    EvalReport report = evaluate(cpc_predict(model, validation), validation.labels(), classes);
    out.thetas.push_back(theta);
    out.accuracies.push_back(report.accuracy);
    // Strict improvement keeps the smaller theta on ties.
    if (out.thetas.size() == 1 || report.accuracy > out.best_accuracy) {
      out.best_theta = theta;
      out.best_accuracy = report.accuracy;
      out.best_report = std::move(report);
    }
  }
  out.best_report.config = out.config;
  out.best_report.seed = out.seed;
  return out;
}

// --- baseline vs CPC ------------------------------------------------------

std::vector<ComparisonRow> compare(const LabeledDataset& train, const LabeledDataset& test,
                                   std::span<const ClassifierSpec> specs, const CpcConfig& cfg) {
  if (specs.empty()) throw Error(ErrorKind::BadSpec, "no classifier specs to compare");
  std::vector<ComparisonRow> rows;
  for (const auto& spec : specs) {
    const TrainedClassifier baseline = fit(spec, train);
    const EvalReport base_report = evaluate(baseline.predict(test), test.labels(), test.class_count());

    CpcConfig c = cfg;
    c.base = spec;
    c.expert = spec;
    const CpcModel model = train_cpc(train, c);
    const auto preds = cpc_predict(model, test);
    const EvalReport cpc_report = evaluate(preds, test.labels(), test.class_count());

    ComparisonRow row{spec, base_report.accuracy, cpc_report.accuracy, {}};
    for (std::size_t k = 0; k < base_report.per_class.size(); ++k) {
      const auto& b = base_report.per_class[k];
      const auto& p = cpc_report.per_class[k];
      row.per_class_delta.push_back(b && p ? std::optional<double>(*p - *b) : std::nullopt);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(std::span<const ComparisonRow> rows, const CpcConfig& cfg) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : rows) {
    table.push_back({{"classifier", to_json(r.spec)},
                     {"baseline", r.baseline_accuracy},
                     {"cpc", r.cpc_accuracy},
                     {"difference", r.difference()},
                     {"per_class_delta", optional_list(r.per_class_delta)}});
  }
  return {{"rows", table}, {"config", to_json(cfg)}, {"seed", cfg.seed}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

}  // namespace cpc
