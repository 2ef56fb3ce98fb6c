#include "cpc/mlp.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cpc/error.hpp"
#include "cpc/random.hpp"
#include "json_util.hpp"

namespace cpc {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::plain: return "fc";
    case BlockKind::residual_add: return "add";
    case BlockKind::residual_concat: return "concat";
  }
  return "unknown";
}

std::string_view to_string(Activation act) {
  return act == Activation::relu ? "relu" : "identity";
}

int block_output_width(const BlockSpec& spec, int input_width) {
  return spec.kind == BlockKind::residual_concat ? spec.hidden_width + input_width
                                                 : spec.hidden_width;
}

namespace {

int parse_width(std::string_view token, std::string_view value) {
  int v = 0;
  std::istringstream in{std::string(value)};
  if (!(in >> v) || !in.eof() || v < 1) {
    throw Error(ErrorKind::BadSpec, "bad width in architecture token '" + std::string(token) + "'");
  }
  return v;
}

BlockKind parse_block_kind(std::string_view name) {
  if (name == "fc" || name == "plain") return BlockKind::plain;
  if (name == "add" || name == "residual_add") return BlockKind::residual_add;
  if (name == "concat" || name == "residual_concat") return BlockKind::residual_concat;
  throw Error(ErrorKind::BadSpec, "unknown block kind '" + std::string(name) + "'");
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "identity") return Activation::identity;
  throw Error(ErrorKind::Format, "unknown activation '" + std::string(name) + "'");
}

}  // namespace

Architecture parse_architecture(std::string_view text) {
  Architecture arch;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) {
    const auto colon = token.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorKind::BadSpec, "architecture token '" + token + "' lacks ':'");
    }
    const std::string_view name = std::string_view(token).substr(0, colon);
    const std::string_view value = std::string_view(token).substr(colon + 1);
    if (name == "in") {
      if (arch.input_width != 0 || !arch.blocks.empty()) {
        throw Error(ErrorKind::BadSpec, "'in:' must appear once, first");
      }
      arch.input_width = parse_width(token, value);
    } else if (name == "head") {
      if (arch.classes != 0) throw Error(ErrorKind::BadSpec, "'head:' must appear once");
      arch.classes = parse_width(token, value);
    } else {
      if (arch.classes != 0) throw Error(ErrorKind::BadSpec, "blocks after 'head:'");
      arch.blocks.push_back({parse_block_kind(name), parse_width(token, value)});
    }
  }
  if (arch.input_width == 0 || arch.classes == 0 || arch.blocks.empty()) {
    throw Error(ErrorKind::BadSpec, "architecture needs 'in:', at least one block and 'head:'");
  }
  return arch;
}

std::string format_architecture(const Architecture& arch) {
  std::ostringstream out;
  out << "in:" << arch.input_width;
  for (const auto& b : arch.blocks) out << ' ' << to_string(b.kind) << ':' << b.hidden_width;
  out << " head:" << arch.classes;
  return out.str();
}

// --- model ----------------------------------------------------------------

MlpModel::MlpModel(int input_width, std::vector<Block> blocks, Head head, int feature_tap,
                   Activation activation)
    : input_width_(input_width),
      blocks_(std::move(blocks)),
      head_(std::move(head)),
      feature_tap_(feature_tap),
      activation_(activation) {
  validate();
}

void MlpModel::validate() const {
  if (input_width_ < 1) throw Error(ErrorKind::BadSpec, "input width must be >= 1");
  if (blocks_.empty()) throw Error(ErrorKind::BadSpec, "model needs at least one block");
  int width = input_width_;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string where = "block " + std::to_string(i) + ": ";
    if (b.input_width != width) throw Error(ErrorKind::BadSpec, where + "input width does not chain");
    if (b.spec.hidden_width < 1) throw Error(ErrorKind::BadSpec, where + "hidden width must be >= 1");
    if (b.spec.kind == BlockKind::residual_add && b.spec.hidden_width != width) {
      throw Error(ErrorKind::BadSpec, where + "residual_add needs hidden width " +
                                          std::to_string(width) + ", got " +
                                          std::to_string(b.spec.hidden_width));
    }
    if (b.weights.rows() != b.spec.hidden_width || b.weights.cols() != width ||
        b.bias.size() != b.spec.hidden_width) {
      throw Error(ErrorKind::BadSpec, where + "parameter shapes do not match the block spec");
    }
    width = b.output_width();
  }
  if (head_.weights.rows() < 1 || head_.weights.cols() != width || head_.bias.size() != head_.weights.rows()) {
    throw Error(ErrorKind::BadSpec, "head shape does not match the last block");
  }
  if (feature_tap_ < 0 || feature_tap_ >= static_cast<int>(blocks_.size())) {
    throw Error(ErrorKind::BadSpec, "feature tap " + std::to_string(feature_tap_) + " out of range");
  }
}

MlpModel MlpModel::create(const Architecture& arch, std::uint64_t seed, Activation activation,
                          int feature_tap) {
  Rng rng(seed);
  auto init = [&rng](int rows, int cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    }
    return w;
  };

  std::vector<Block> blocks;
  int width = arch.input_width;
  for (const auto& spec : arch.blocks) {
    if (spec.kind == BlockKind::residual_add && spec.hidden_width != width) {
      throw Error(ErrorKind::BadSpec, "residual_add needs hidden width equal to its input width " +
                                          std::to_string(width));
    }
    if (spec.hidden_width < 1) throw Error(ErrorKind::BadSpec, "hidden width must be >= 1");
    Block b{spec, width, init(spec.hidden_width, width), Eigen::VectorXd::Zero(spec.hidden_width)};
    width = b.output_width();
    blocks.push_back(std::move(b));
  }
  if (arch.classes < 1) throw Error(ErrorKind::BadSpec, "head needs at least one class");
  Head head{init(arch.classes, width), Eigen::VectorXd::Zero(arch.classes)};
  const int tap = feature_tap < 0 ? static_cast<int>(blocks.size()) - 1 : feature_tap;
  return {arch.input_width, std::move(blocks), std::move(head), tap, activation};
}

Architecture MlpModel::architecture() const {
  Architecture arch{input_width_, {}, classes()};
  for (const auto& b : blocks_) arch.blocks.push_back(b.spec);
  return arch;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.weights.size() + b.bias.size());
  return n + static_cast<std::size_t>(head_.weights.size() + head_.bias.size());
}

namespace {

template <typename M>
void append_row_major(std::vector<double>& out, const M& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
}

template <typename M>
void read_row_major(std::span<const double>& in, M& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = in[static_cast<std::size_t>(i * m.cols() + j)];
  }
  in = in.subspan(static_cast<std::size_t>(m.size()));
}

}  // namespace

std::vector<double> MlpModel::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& b : blocks_) {
    append_row_major(out, b.weights);
    append_row_major(out, b.bias);
  }
  append_row_major(out, head_.weights);
  append_row_major(out, head_.bias);
  return out;
}

void MlpModel::set_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw Error(ErrorKind::DimMismatch, "parameter vector has the wrong length");
  }
  for (auto& b : blocks_) {
    read_row_major(values, b.weights);
    read_row_major(values, b.bias);
  }
  read_row_major(values, head_.weights);
  read_row_major(values, head_.bias);
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    append_row_major(out, weights[i]);
    append_row_major(out, bias[i]);
  }
  append_row_major(out, head_weights);
  append_row_major(out, head_bias);
  return out;
}

nlohmann::json MlpModel::to_json() const {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) {
    blocks.push_back({{"kind", to_string(b.spec.kind)},
                      {"hidden", b.spec.hidden_width},
                      {"weights", detail::matrix_to_json(b.weights)},
                      {"bias", detail::vector_to_json(b.bias)}});
  }
  return {{"architecture", format_architecture(architecture())},
          {"input_width", input_width_},
          {"activation", to_string(activation_)},
          {"feature_tap", feature_tap_},
          {"blocks", blocks},
          {"head",
           {{"weights", detail::matrix_to_json(head_.weights)},
            {"bias", detail::vector_to_json(head_.bias)}}}};
}

MlpModel MlpModel::from_json(const nlohmann::json& j) {
  try {
    const int input = j.at("input_width").get<int>();
    std::vector<Block> blocks;
    int width = input;
    for (const auto& jb : j.at("blocks")) {
      Block b;
      b.spec = {parse_block_kind(jb.at("kind").get<std::string>()), jb.at("hidden").get<int>()};
      b.input_width = width;
      b.weights = detail::matrix_from_json<Eigen::MatrixXd>(jb.at("weights"), width);
      b.bias = detail::vector_from_json(jb.at("bias"));
      width = b.output_width();
      blocks.push_back(std::move(b));
    }
    Head head{detail::matrix_from_json<Eigen::MatrixXd>(j.at("head").at("weights"), width),
              detail::vector_from_json(j.at("head").at("bias"))};
    return {input, std::move(blocks), std::move(head), j.at("feature_tap").get<int>(),
            parse_activation(j.at("activation").get<std::string>())};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("model: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const MlpModel& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << m.to_json().dump() << '\n';
}

MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return MlpModel::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Format, e.what());
  }
}

// --- forward / backward ---------------------------------------------------

namespace {

// Column-per-sample activations kept for the backward pass.
struct Cache {
  std::vector<Eigen::MatrixXd> inputs;  // block inputs; inputs.back() feeds the head
  std::vector<Eigen::MatrixXd> pre;     // W a + b
  std::vector<Eigen::MatrixXd> masks;   // empty when dropout is off
  Eigen::MatrixXd scores;
};

bool dropout_active(const ForwardOptions& opts) { return opts.train_mode && opts.dropout > 0.0; }

Cache run_forward(const MlpModel& m, Eigen::MatrixXd a, const ForwardOptions& opts) {
  if (a.rows() != m.input_width()) {
    throw Error(ErrorKind::DimMismatch, "input has width " + std::to_string(a.rows()) +
                                            ", model expects " + std::to_string(m.input_width()));
  }
  if (opts.dropout < 0.0 || opts.dropout >= 1.0) {
    throw Error(ErrorKind::BadHyperparams, "dropout must be in [0, 1)");
  }
  const bool drop = dropout_active(opts);
  Rng rng(opts.seed);
  std::bernoulli_distribution keep(1.0 - opts.dropout);
  const double scale = drop ? 1.0 / (1.0 - opts.dropout) : 1.0;

  Cache c;
  c.inputs.reserve(m.blocks().size() + 1);
  for (const auto& b : m.blocks()) {
    Eigen::MatrixXd z = b.weights * a;
    z.colwise() += b.bias;
    Eigen::MatrixXd h = m.activation() == Activation::relu ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
    if (drop) {
      Eigen::MatrixXd mask(h.rows(), h.cols());
      for (Eigen::Index col = 0; col < mask.cols(); ++col) {
        for (Eigen::Index row = 0; row < mask.rows(); ++row) mask(row, col) = keep(rng) ? scale : 0.0;
      }
      h.array() *= mask.array();
      c.masks.push_back(std::move(mask));
    }
    Eigen::MatrixXd out;
    switch (b.spec.kind) {
      case BlockKind::plain:
        out = std::move(h);
        break;
      case BlockKind::residual_add:
        out = h + a;
        break;
      case BlockKind::residual_concat:
        out.resize(h.rows() + a.rows(), a.cols());
        out.topRows(h.rows()) = h;
        out.bottomRows(a.rows()) = a;
        break;
    }
    c.inputs.push_back(std::move(a));
    c.pre.push_back(std::move(z));
    a = std::move(out);
  }
  c.scores = m.head().weights * a;
  c.scores.colwise() += m.head().bias;
  c.inputs.push_back(std::move(a));
  return c;
}

Eigen::MatrixXd columns(const Matrix& x) { return x.transpose(); }

void check_labels(const MlpModel& m, const Matrix& x, std::span<const int> labels) {
  if (x.rows() == 0) throw Error(ErrorKind::EmptyDataset, "empty batch");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "batch rows and labels differ in length");
  }
  for (int y : labels) {
    if (y < 0 || y >= m.classes()) throw Error(ErrorKind::LabelOutOfRange, "label outside head range");
  }
}

// Turns scores into (softmax - onehot) / B in place and returns the mean loss.
double softmax_cross_entropy(Eigen::MatrixXd& scores, std::span<const int> labels) {
  const auto b = scores.cols();
  double loss = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    auto col = scores.col(j);
    const double top = col.maxCoeff();
    col.array() = (col.array() - top).exp();
    const double sum = col.sum();
    const int y = labels[static_cast<std::size_t>(j)];
    loss -= std::log(col(y) / sum);
    col /= sum;
    col(y) -= 1.0;
  }
  scores /= static_cast<double>(b);
  return loss / static_cast<double>(b);
}

}  // namespace

ForwardResult forward(const MlpModel& m, std::span<const double> x, const ForwardOptions& opts) {
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), static_cast<Eigen::Index>(x.size()));
  Cache c = run_forward(m, Eigen::MatrixXd(v), opts);
  ForwardResult r;
  r.scores = c.scores.col(0);
  for (std::size_t i = 1; i < c.inputs.size(); ++i) r.activations.emplace_back(c.inputs[i].col(0));
  return r;
}

double batch_loss(const MlpModel& m, const Matrix& x, std::span<const int> labels,
                  const ForwardOptions& opts) {
  check_labels(m, x, labels);
  Cache c = run_forward(m, columns(x), opts);
  return softmax_cross_entropy(c.scores, labels);
}

Gradients backward(const MlpModel& m, const Matrix& x, std::span<const int> labels,
                   const ForwardOptions& opts) {
  check_labels(m, x, labels);
  Cache c = run_forward(m, columns(x), opts);
  Gradients g;
  g.loss = softmax_cross_entropy(c.scores, labels);
  const Eigen::MatrixXd& d_scores = c.scores;

  g.head_weights = d_scores * c.inputs.back().transpose();
  g.head_bias = d_scores.rowwise().sum();
  Eigen::MatrixXd d_out = m.head().weights.transpose() * d_scores;

  const auto& blocks = m.blocks();
  g.weights.resize(blocks.size());
  g.bias.resize(blocks.size());
  const bool drop = dropout_active(opts);
  for (std::size_t k = blocks.size(); k-- > 0;) {
    const auto& b = blocks[k];
    const Eigen::MatrixXd& a = c.inputs[k];
    Eigen::MatrixXd d_h;
    Eigen::MatrixXd d_skip;
    switch (b.spec.kind) {
      case BlockKind::plain:
        d_h = std::move(d_out);
        break;
      case BlockKind::residual_add:
        d_h = d_out;
        d_skip = std::move(d_out);
        break;
      case BlockKind::residual_concat:
        d_h = d_out.topRows(b.spec.hidden_width);
        d_skip = d_out.bottomRows(b.input_width);
        break;
    }
    if (drop) d_h.array() *= c.masks[k].array();
    if (m.activation() == Activation::relu) {
      d_h.array() *= (c.pre[k].array() > 0.0).cast<double>();
    }
    g.weights[k] = d_h * a.transpose();
    g.bias[k] = d_h.rowwise().sum();
    d_out = b.weights.transpose() * d_h;
    if (d_skip.size() != 0) d_out += d_skip;
  }
  return g;
}

// --- training -------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::BadHyperparams, "learning rate must be > 0");
  }
  if (momentum < 0 || momentum >= 1) throw Error(ErrorKind::BadHyperparams, "momentum must be in [0, 1)");
  if (dropout < 0 || dropout >= 1) throw Error(ErrorKind::BadHyperparams, "dropout must be in [0, 1)");
  if (batch_size < 0) throw Error(ErrorKind::BadHyperparams, "batch size must be >= 0");
  if (epochs < 0) throw Error(ErrorKind::BadHyperparams, "epochs must be >= 0");
  if (!(lr_decay_per_epoch > 0)) throw Error(ErrorKind::BadHyperparams, "lr decay must be > 0");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"momentum", cfg.momentum},
          {"dropout", cfg.dropout},             {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},               {"lr_decay_per_epoch", cfg.lr_decay_per_epoch},
          {"seed", cfg.seed}};
}

TrainResult train(const MlpModel& m, const LabeledDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result{m, {}};
  if (cfg.epochs == 0) return result;
  if (ds.empty()) throw Error(ErrorKind::EmptyDataset, "cannot train on no samples");
  if (static_cast<int>(ds.dim()) != m.input_width()) {
    throw Error(ErrorKind::DimMismatch, "dataset width differs from model input width");
  }
  if (ds.class_count() > m.classes()) {
    throw Error(ErrorKind::DimMismatch, "dataset has more classes than the model head");
  }

  MlpModel& model = result.model;
  const std::size_t n = ds.size();
  const std::size_t batch =
      cfg.batch_size == 0 ? n : std::min<std::size_t>(n, static_cast<std::size_t>(cfg.batch_size));
  std::vector<double> params = model.parameters();
  std::vector<double> velocity(params.size(), 0.0);
  IndexList order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);

  Matrix xb;
  std::vector<int> yb;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::uint64_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t stop = std::min(n, start + batch);
      xb.resize(static_cast<Eigen::Index>(stop - start), static_cast<Eigen::Index>(ds.dim()));
      yb.resize(stop - start);
      for (std::size_t r = start; r < stop; ++r) {
        xb.row(static_cast<Eigen::Index>(r - start)) = ds.features().row(static_cast<Eigen::Index>(order[r]));
        yb[r - start] = ds.label(order[r]);
      }
      const ForwardOptions opts{true, cfg.dropout,
                                derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), batch_index)};
      const Gradients g = backward(model, xb, yb, opts);
      if (!std::isfinite(g.loss)) throw DivergenceError(epoch, "training loss is not finite");
      total += g.loss * static_cast<double>(stop - start);

      const auto grad = g.flatten();
      for (std::size_t p = 0; p < params.size(); ++p) {
        velocity[p] = cfg.momentum * velocity[p] - lr * grad[p];
        params[p] += velocity[p];
        if (!std::isfinite(params[p])) throw DivergenceError(epoch, "parameters are not finite");
      }
      model.set_parameters(params);
    }
    result.loss_trace.push_back(total / static_cast<double>(n));
    lr *= cfg.lr_decay_per_epoch;
  }
  return result;
}

LabeledDataset extract_features(const MlpModel& m, const LabeledDataset& ds) {
  if (static_cast<int>(ds.dim()) != m.input_width()) {
    throw Error(ErrorKind::DimMismatch, "dataset width differs from model input width");
  }
  const Cache c = run_forward(m, columns(ds.features()), {});
  const Eigen::MatrixXd& tap = c.inputs[static_cast<std::size_t>(m.feature_tap()) + 1];
  return ds.with_features(tap.transpose());
}

}  // namespace cpc
