#include "cpc/classifiers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "cpc/error.hpp"
#include "cpc/random.hpp"
#include "json_util.hpp"

namespace cpc {

namespace {
std::atomic<std::uint64_t> g_fit_count{0};
}  // namespace

std::uint64_t fit_count() noexcept { return g_fit_count.load(std::memory_order_relaxed); }

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::softmax: return "softmax";
    case ClassifierKind::linear_svm: return "linear_svm";
    case ClassifierKind::random_forest: return "random_forest";
    case ClassifierKind::knn: return "knn";
  }
  return "unknown";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  if (name == "softmax") return ClassifierKind::softmax;
  if (name == "svm" || name == "linear_svm") return ClassifierKind::linear_svm;
  if (name == "forest" || name == "random_forest") return ClassifierKind::random_forest;
  if (name == "knn") return ClassifierKind::knn;
  throw Error(ErrorKind::BadHyperparams, "unknown classifier kind '" + std::string(name) + "'");
}

void ClassifierSpec::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::BadHyperparams, what); };
  switch (kind) {
    case ClassifierKind::softmax:
    case ClassifierKind::linear_svm:
      if (!(sgd.learning_rate > 0) || !std::isfinite(sgd.learning_rate)) bad("learning rate must be > 0");
      if (sgd.epochs < 1) bad("epochs must be >= 1");
      if (sgd.batch_size < 0) bad("batch size must be >= 0");
      if (sgd.momentum < 0 || sgd.momentum >= 1) bad("momentum must be in [0, 1)");
      if (sgd.l2 < 0) bad("L2 strength must be >= 0");
      if (kind == ClassifierKind::linear_svm && !(sgd.hinge_margin > 0)) bad("hinge margin must be > 0");
      break;
    case ClassifierKind::random_forest:
      if (forest.trees < 1) bad("tree count must be >= 1");
      if (forest.max_depth < 0) bad("max depth must be >= 0");
      if (forest.features_per_split < 0) bad("features per split must be >= 0");
      break;
    case ClassifierKind::knn:
      if (knn.k < 1) bad("k must be >= 1");
      break;
  }
}

nlohmann::json to_json(const ClassifierSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)}, {"seed", spec.seed}};
  switch (spec.kind) {
    case ClassifierKind::softmax:
    case ClassifierKind::linear_svm:
      j["learning_rate"] = spec.sgd.learning_rate;
      j["momentum"] = spec.sgd.momentum;
      j["epochs"] = spec.sgd.epochs;
      j["batch_size"] = spec.sgd.batch_size;
      j["l2"] = spec.sgd.l2;
      if (spec.kind == ClassifierKind::linear_svm) j["hinge_margin"] = spec.sgd.hinge_margin;
      break;
    case ClassifierKind::random_forest:
      j["trees"] = spec.forest.trees;
      j["max_depth"] = spec.forest.max_depth;
      j["features_per_split"] = spec.forest.features_per_split;
      break;
    case ClassifierKind::knn:
      j["k"] = spec.knn.k;
      break;
  }
  return j;
}

ClassifierSpec classifier_spec_from_json(const nlohmann::json& j) {
  try {
    ClassifierSpec s;
    s.kind = parse_classifier_kind(j.at("kind").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.sgd.learning_rate = j.value("learning_rate", s.sgd.learning_rate);
    s.sgd.momentum = j.value("momentum", s.sgd.momentum);
    s.sgd.epochs = j.value("epochs", s.sgd.epochs);
    s.sgd.batch_size = j.value("batch_size", s.sgd.batch_size);
    s.sgd.l2 = j.value("l2", s.sgd.l2);
    s.sgd.hinge_margin = j.value("hinge_margin", s.sgd.hinge_margin);
    s.forest.trees = j.value("trees", s.forest.trees);
    s.forest.max_depth = j.value("max_depth", s.forest.max_depth);
    s.forest.features_per_split = j.value("features_per_split", s.forest.features_per_split);
    s.knn.k = j.value("k", s.knn.k);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("classifier spec: ") + e.what());
  }
}

// --- distances ------------------------------------------------------------

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

IndexList neighbors(const Matrix& points, std::span<const double> x, int k) {
  if (k < 1) throw Error(ErrorKind::BadHyperparams, "neighbor count must be >= 1");
  const auto d = static_cast<std::size_t>(points.cols());
  if (x.size() != d) {
    throw Error(ErrorKind::DimMismatch, "query has dimension " + std::to_string(x.size()) +
                                            ", points have " + std::to_string(d));
  }
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = {squared_distance({points.data() + i * d, d}, x), i};
  }
  const std::size_t take = std::min(n, static_cast<std::size_t>(k));
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  IndexList out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

IndexList neighbors(const LabeledDataset& ds, std::span<const double> x, int k) {
  return neighbors(ds.features(), x, k);
}

// --- TrainedClassifier ----------------------------------------------------

TrainedClassifier::TrainedClassifier(ClassifierSpec spec, std::size_t dim, int class_count,
                                     std::vector<int> classes_seen, Model model,
                                     std::vector<double> loss_trace)
    : spec_(spec),
      dim_(dim),
      class_count_(class_count),
      classes_seen_(std::move(classes_seen)),
      model_(std::move(model)),
      loss_trace_(std::move(loss_trace)) {}

void TrainedClassifier::check_dim(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw Error(ErrorKind::DimMismatch, "input has dimension " + std::to_string(x.size()) +
                                            ", classifier expects " + std::to_string(dim_));
  }
}

std::vector<double> TrainedClassifier::decision_scores(std::span<const double> x) const {
  check_dim(x);
  const auto* linear = std::get_if<Linear>(&model_);
  if (linear == nullptr) {
    throw Error(ErrorKind::BadSpec, "decision scores are only defined for linear models");
  }
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::VectorXd s = linear->weights * v + linear->bias;
  return {s.data(), s.data() + s.size()};
}

namespace {

int tree_predict(const std::vector<TreeNode>& nodes, std::span<const double> x) {
  int at = 0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(at)];
    at = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(at)].label;
}

}  // namespace

int TrainedClassifier::predict(std::span<const double> x) const {
  check_dim(x);
  if (classes_seen_.size() == 1) return classes_seen_.front();

  if (std::holds_alternative<Linear>(model_)) {
    const auto scores = decision_scores(x);
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    return classes_seen_[static_cast<std::size_t>(best)];
  }
  if (const auto* forest = std::get_if<Forest>(&model_)) {
    std::vector<int> votes(static_cast<std::size_t>(class_count_), 0);
    for (const auto& tree : forest->trees) ++votes[static_cast<std::size_t>(tree_predict(tree, x))];
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  const auto& knn = std::get<Knn>(model_);
  const auto near = neighbors(knn.points, x, spec_.knn.k);
  std::vector<int> votes(static_cast<std::size_t>(class_count_), 0);
  for (std::size_t i : near) ++votes[static_cast<std::size_t>(knn.labels[i])];
  const int top = *std::max_element(votes.begin(), votes.end());
  // Among tied classes, the one owning the nearest neighbor wins.
  for (std::size_t i : near) {
    const int y = knn.labels[i];
    if (votes[static_cast<std::size_t>(y)] == top) return y;
  }
  return knn.labels[near.front()];
}

std::vector<int> TrainedClassifier::predict(const LabeledDataset& ds) const {
  std::vector<int> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = predict(ds.row(i));
  return out;
}

nlohmann::json TrainedClassifier::to_json() const {
  nlohmann::json j{{"kind", cpc::to_string(spec_.kind)},
                   {"spec", cpc::to_json(spec_)},
                   {"dim", dim_},
                   {"class_count", class_count_},
                   {"classes_seen", classes_seen_}};
  if (const auto* linear = std::get_if<Linear>(&model_)) {
    j["weights"] = detail::matrix_to_json(linear->weights);
    j["bias"] = detail::vector_to_json(linear->bias);
  } else if (const auto* forest = std::get_if<Forest>(&model_)) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest->trees) {
      nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                     left = nlohmann::json::array(), right = nlohmann::json::array(),
                     label = nlohmann::json::array();
      for (const auto& node : tree) {
        feature.push_back(node.feature);
        threshold.push_back(node.threshold);
        left.push_back(node.left);
        right.push_back(node.right);
        label.push_back(node.label);
      }
      trees.push_back({{"feature", feature},
                       {"threshold", threshold},
                       {"left", left},
                       {"right", right},
                       {"label", label}});
    }
    j["trees"] = std::move(trees);
  } else {
    const auto& knn = std::get<Knn>(model_);
    j["points"] = detail::matrix_to_json(knn.points);
    j["labels"] = knn.labels;
  }
  return j;
}

TrainedClassifier TrainedClassifier::from_json(const nlohmann::json& j) {
  try {
    const ClassifierSpec spec = classifier_spec_from_json(j.at("spec"));
    const auto dim = j.at("dim").get<std::size_t>();
    const int classes = j.at("class_count").get<int>();
    auto seen = j.at("classes_seen").get<std::vector<int>>();
    if (seen.empty()) throw Error(ErrorKind::Format, "classifier has no classes");
    Model model;
    switch (spec.kind) {
      case ClassifierKind::softmax:
      case ClassifierKind::linear_svm: {
        Linear linear;
        linear.weights = detail::matrix_from_json<Eigen::MatrixXd>(j.at("weights"),
                                                                   static_cast<Eigen::Index>(dim));
        linear.bias = detail::vector_from_json(j.at("bias"));
        if (static_cast<std::size_t>(linear.weights.rows()) != seen.size() ||
            static_cast<std::size_t>(linear.weights.cols()) != dim ||
            linear.bias.size() != linear.weights.rows()) {
          throw Error(ErrorKind::Format, "linear model shape mismatch");
        }
        model = std::move(linear);
        break;
      }
      case ClassifierKind::random_forest: {
        Forest forest;
        for (const auto& t : j.at("trees")) {
          const auto feature = t.at("feature").get<std::vector<int>>();
          const auto threshold = t.at("threshold").get<std::vector<double>>();
          const auto left = t.at("left").get<std::vector<int>>();
          const auto right = t.at("right").get<std::vector<int>>();
          const auto label = t.at("label").get<std::vector<int>>();
          const std::size_t count = feature.size();
          if (count == 0 || threshold.size() != count || left.size() != count ||
              right.size() != count || label.size() != count) {
            throw Error(ErrorKind::Format, "forest tree arrays disagree in length");
          }
          std::vector<TreeNode> nodes(count);
          for (std::size_t i = 0; i < count; ++i) {
            nodes[i] = {feature[i], threshold[i], left[i], right[i], label[i]};
            const bool leaf = feature[i] < 0;
            if (!leaf && (feature[i] >= static_cast<int>(dim) || left[i] <= static_cast<int>(i) ||
                          right[i] <= static_cast<int>(i) || left[i] >= static_cast<int>(count) ||
                          right[i] >= static_cast<int>(count))) {
              throw Error(ErrorKind::Format, "malformed forest node");
            }
          }
          forest.trees.push_back(std::move(nodes));
        }
        model = std::move(forest);
        break;
      }
      case ClassifierKind::knn: {
        Knn knn;
        knn.points = detail::matrix_from_json<Matrix>(j.at("points"), static_cast<Eigen::Index>(dim));
        knn.labels = j.at("labels").get<std::vector<int>>();
        if (static_cast<std::size_t>(knn.points.rows()) != knn.labels.size() ||
            static_cast<std::size_t>(knn.points.cols()) != dim) {
          throw Error(ErrorKind::Format, "knn model shape mismatch");
        }
        model = std::move(knn);
        break;
      }
    }
    return {spec, dim, classes, std::move(seen), std::move(model)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("classifier: ") + e.what());
  }
}

void save_classifier(const std::filesystem::path& path, const TrainedClassifier& clf) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << clf.to_json().dump() << '\n';
}

TrainedClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return TrainedClassifier::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Format, e.what());
  }
}

// --- training -------------------------------------------------------------

namespace {

std::vector<int> distinct_labels(const LabeledDataset& ds) {
  std::vector<int> seen = ds.labels();
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  return seen;
}

// Objective value and gradient of one mini-batch. `local` holds the dense
// index into classes_seen for each row of `x`.
struct BatchGradient {
  double loss = 0.0;
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

BatchGradient softmax_gradient(const Eigen::MatrixXd& x, const std::vector<int>& local,
                               const TrainedClassifier::Linear& m, double l2) {
  const auto b = x.rows();
  Eigen::MatrixXd z = x * m.weights.transpose();
  z.rowwise() += m.bias.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    auto row = z.row(i);
    const double top = row.maxCoeff();
    row.array() = (row.array() - top).exp();
    const double sum = row.sum();
    const int y = local[static_cast<std::size_t>(i)];
    loss -= std::log(row(y) / sum);
    row /= sum;
    row(y) -= 1.0;
  }
  z /= static_cast<double>(b);
  BatchGradient g;
  g.loss = loss / static_cast<double>(b) + 0.5 * l2 * m.weights.squaredNorm();
  g.weights = z.transpose() * x + l2 * m.weights;
  g.bias = z.colwise().sum().transpose();
  return g;
}

BatchGradient hinge_gradient(const Eigen::MatrixXd& x, const std::vector<int>& local,
                             const TrainedClassifier::Linear& m, double l2, double margin) {
  const auto b = x.rows();
  Eigen::MatrixXd z = x * m.weights.transpose();
  z.rowwise() += m.bias.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double t = (local[static_cast<std::size_t>(i)] == c) ? 1.0 : -1.0;
      const double slack = margin - t * z(i, c);
      if (slack > 0) {
        loss += slack;
        z(i, c) = -t;
      } else {
        z(i, c) = 0.0;
      }
    }
  }
  z /= static_cast<double>(b);
  BatchGradient g;
  g.loss = loss / static_cast<double>(b) + 0.5 * l2 * m.weights.squaredNorm();
  g.weights = z.transpose() * x + l2 * m.weights;
  g.bias = z.colwise().sum().transpose();
  return g;
}

TrainedClassifier fit_linear(const ClassifierSpec& spec, const LabeledDataset& ds,
                             std::vector<int> seen) {
  const auto d = static_cast<Eigen::Index>(ds.dim());
  const auto classes = static_cast<Eigen::Index>(seen.size());
  TrainedClassifier::Linear m{Eigen::MatrixXd::Zero(classes, d), Eigen::VectorXd::Zero(classes)};
  if (seen.size() == 1) return {spec, ds.dim(), ds.class_count(), std::move(seen), std::move(m)};

  std::vector<int> to_local(static_cast<std::size_t>(ds.class_count()), -1);
  for (std::size_t c = 0; c < seen.size(); ++c) to_local[static_cast<std::size_t>(seen[c])] = static_cast<int>(c);

  const std::size_t n = ds.size();
  const std::size_t batch =
      (spec.sgd.batch_size == 0) ? n : std::min<std::size_t>(n, static_cast<std::size_t>(spec.sgd.batch_size));
  const bool full_batch = batch == n;

  Eigen::MatrixXd vel_w = Eigen::MatrixXd::Zero(classes, d);
  Eigen::VectorXd vel_b = Eigen::VectorXd::Zero(classes);
  IndexList order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);

  Eigen::MatrixXd xb;
  std::vector<int> yb;
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(spec.sgd.epochs));
  for (int epoch = 0; epoch < spec.sgd.epochs; ++epoch) {
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const auto rows = static_cast<Eigen::Index>(stop - start);
      xb.resize(rows, d);
      yb.resize(static_cast<std::size_t>(rows));
      for (std::size_t r = start; r < stop; ++r) {
        const auto at = static_cast<Eigen::Index>(r - start);
        xb.row(at) = ds.features().row(static_cast<Eigen::Index>(order[r]));
        yb[static_cast<std::size_t>(at)] = to_local[static_cast<std::size_t>(ds.label(order[r]))];
      }
      const BatchGradient g = spec.kind == ClassifierKind::softmax
                                  ? softmax_gradient(xb, yb, m, spec.sgd.l2)
                                  : hinge_gradient(xb, yb, m, spec.sgd.l2, spec.sgd.hinge_margin);
      if (!std::isfinite(g.loss)) throw DivergenceError(epoch, "training objective is not finite");
      epoch_loss += g.loss * static_cast<double>(rows);
      vel_w = spec.sgd.momentum * vel_w - spec.sgd.learning_rate * g.weights;
      vel_b = spec.sgd.momentum * vel_b - spec.sgd.learning_rate * g.bias;
      m.weights += vel_w;
      m.bias += vel_b;
    }
    trace.push_back(epoch_loss / static_cast<double>(n));
  }
  if (!m.weights.allFinite() || !m.bias.allFinite()) {
    throw DivergenceError(spec.sgd.epochs - 1, "weights are not finite");
  }
  return {spec, ds.dim(), ds.class_count(), std::move(seen), std::move(m), std::move(trace)};
}

// --- forest ---------------------------------------------------------------

class TreeBuilder {
 public:
  TreeBuilder(const LabeledDataset& ds, const ForestParams& params, Rng& rng)
      : ds_(ds), params_(params), rng_(rng), counts_(static_cast<std::size_t>(ds.class_count())) {
    const auto d = static_cast<int>(ds.dim());
    mtry_ = params.features_per_split > 0
                ? std::min(params.features_per_split, d)
                : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    features_.resize(static_cast<std::size_t>(d));
    std::iota(features_.begin(), features_.end(), 0);
  }

  std::vector<TreeNode> build(IndexList samples) {
    nodes_.clear();
    struct Pending {
      int node;
      IndexList samples;
      int depth;
    };
    std::vector<Pending> stack;
    nodes_.emplace_back();
    stack.push_back({0, std::move(samples), 0});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      nodes_[static_cast<std::size_t>(job.node)].label = majority(job.samples);
      if (is_pure(job.samples) || (params_.max_depth > 0 && job.depth >= params_.max_depth)) continue;

      const auto best = find_split(job.samples);
      if (best.feature < 0) continue;

      IndexList left, right;
      for (std::size_t i : job.samples) {
        (ds_.row(i)[static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(i);
      }
      const int l = static_cast<int>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      auto& node = nodes_[static_cast<std::size_t>(job.node)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = l;
      node.right = l + 1;
      stack.push_back({l + 1, std::move(right), job.depth + 1});
      stack.push_back({l, std::move(left), job.depth + 1});
    }
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
  };

  int majority(const IndexList& samples) {
    std::fill(counts_.begin(), counts_.end(), 0);
    for (std::size_t i : samples) ++counts_[static_cast<std::size_t>(ds_.label(i))];
    return static_cast<int>(std::max_element(counts_.begin(), counts_.end()) - counts_.begin());
  }

  bool is_pure(const IndexList& samples) const {
    const int first = ds_.label(samples.front());
    return std::all_of(samples.begin(), samples.end(), [&](std::size_t i) { return ds_.label(i) == first; });
  }

  static double gini(const std::vector<double>& counts, double total) {
    double s = 0.0;
    for (double c : counts) s += c * c;
    return 1.0 - s / (total * total);
  }

  // Scans every threshold of one feature; updates `best` on strict improvement.
  void scan_feature(const IndexList& samples, int feature, Split& best) {
    const auto f = static_cast<std::size_t>(feature);
    values_.clear();
    for (std::size_t i : samples) values_.emplace_back(ds_.row(i)[f], ds_.label(i));
    std::sort(values_.begin(), values_.end());
    if (values_.front().first == values_.back().first) return;

    const std::size_t classes = counts_.size();
    std::vector<double> left(classes, 0.0), right(classes, 0.0);
    for (const auto& v : values_) right[static_cast<std::size_t>(v.second)] += 1.0;
    const double total = static_cast<double>(values_.size());
    for (std::size_t k = 0; k + 1 < values_.size(); ++k) {
      const auto y = static_cast<std::size_t>(values_[k].second);
      left[y] += 1.0;
      right[y] -= 1.0;
      const double a = values_[k].first, b = values_[k + 1].first;
      if (a == b) continue;
      const double nl = static_cast<double>(k + 1), nr = total - nl;
      const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / total;
      if (impurity < best.impurity) {
        double mid = a + (b - a) / 2.0;
        if (!(mid < b)) mid = a;
        best = {feature, mid, impurity};
      }
    }
  }

  Split find_split(const IndexList& samples) {
    // Partial Fisher-Yates: the first mtry entries are the candidate subset,
    // the rest are only consulted when no candidate can separate the node.
    for (std::size_t k = 0; k < features_.size(); ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, features_.size() - 1);
      std::swap(features_[k], features_[pick(rng_)]);
    }
    Split best;
    for (std::size_t k = 0; k < features_.size(); ++k) {
      if (k >= static_cast<std::size_t>(mtry_) && best.feature >= 0) break;
      scan_feature(samples, features_[k], best);
    }
    return best;
  }

  const LabeledDataset& ds_;
  ForestParams params_;
  Rng& rng_;
  int mtry_ = 1;
  std::vector<int> features_;
  std::vector<int> counts_;
  std::vector<std::pair<double, int>> values_;
  std::vector<TreeNode> nodes_;
};

TrainedClassifier fit_forest(const ClassifierSpec& spec, const LabeledDataset& ds,
                             std::vector<int> seen) {
  TrainedClassifier::Forest forest;
  forest.trees.reserve(static_cast<std::size_t>(spec.forest.trees));
  const std::size_t n = ds.size();
  for (int t = 0; t < spec.forest.trees; ++t) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    IndexList bag(n);
    for (auto& i : bag) i = draw(rng);
    TreeBuilder builder(ds, spec.forest, rng);
    forest.trees.push_back(builder.build(std::move(bag)));
  }
  return {spec, ds.dim(), ds.class_count(), std::move(seen), std::move(forest)};
}

}  // namespace

TrainedClassifier fit(const ClassifierSpec& spec, const LabeledDataset& ds) {
  spec.validate();
  if (ds.empty()) throw Error(ErrorKind::EmptyDataset, "cannot fit a classifier on no samples");
  g_fit_count.fetch_add(1, std::memory_order_relaxed);
  auto seen = distinct_labels(ds);
  switch (spec.kind) {
    case ClassifierKind::softmax:
    case ClassifierKind::linear_svm:
      return fit_linear(spec, ds, std::move(seen));
    case ClassifierKind::random_forest:
      return fit_forest(spec, ds, std::move(seen));
    case ClassifierKind::knn:
      return {spec, ds.dim(), ds.class_count(), std::move(seen),
              TrainedClassifier::Knn{ds.features(), ds.labels()}};
  }
  throw Error(ErrorKind::BadHyperparams, "unhandled classifier kind");
}

}  // namespace cpc
