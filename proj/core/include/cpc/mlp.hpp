#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cpc/dataset.hpp"

namespace cpc {

// Fully connected feature extractor built from three block kinds. Every
// block computes H(x) = act(W x + b) and then combines:
//   plain            F(x) = H(x)
//   residual_add     F(x) = H(x) + x      (hidden width must equal input width)
//   residual_concat  F(x) = [H(x), x]     (output width = hidden + input)
// A softmax head maps the last block output to class scores.

enum class BlockKind { plain, residual_add, residual_concat };
enum class Activation { relu, identity };

std::string_view to_string(BlockKind kind);
std::string_view to_string(Activation act);

struct BlockSpec {
  BlockKind kind = BlockKind::plain;
  int hidden_width = 0;
};

/// Output width of a block fed `input_width` features.
int block_output_width(const BlockSpec& spec, int input_width);

/// Compact textual form, e.g. "in:8 concat:16 concat:16 fc:32 head:4".
/// Block tokens: fc|plain, add|residual_add, concat|residual_concat.
struct Architecture {
  int input_width = 0;
  std::vector<BlockSpec> blocks;
  int classes = 0;
};

Architecture parse_architecture(std::string_view text);
std::string format_architecture(const Architecture& arch);

struct Block {
  BlockSpec spec;
  int input_width = 0;
  Eigen::MatrixXd weights;  // hidden x input
  Eigen::VectorXd bias;

  int output_width() const { return block_output_width(spec, input_width); }
};

struct Head {
  Eigen::MatrixXd weights;  // classes x width
  Eigen::VectorXd bias;
};

class MlpModel {
 public:
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  /// feature_tap < 0 selects the last block. Throws BadSpec on width violations.
  static MlpModel create(const Architecture& arch, std::uint64_t seed,
                         Activation activation = Activation::relu, int feature_tap = -1);

  MlpModel(int input_width, std::vector<Block> blocks, Head head, int feature_tap,
           Activation activation);

  int input_width() const noexcept { return input_width_; }
  int classes() const noexcept { return static_cast<int>(head_.weights.rows()); }
  int feature_tap() const noexcept { return feature_tap_; }
  int feature_width() const { return blocks_[static_cast<std::size_t>(feature_tap_)].output_width(); }
  Activation activation() const noexcept { return activation_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::vector<Block>& blocks() noexcept { return blocks_; }
  const Head& head() const noexcept { return head_; }
  Head& head() noexcept { return head_; }
  Architecture architecture() const;

  std::size_t parameter_count() const;
  /// All weights and biases, block by block then head, weights row-major.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  nlohmann::json to_json() const;
  static MlpModel from_json(const nlohmann::json& j);

 private:
  void validate() const;

  int input_width_ = 0;
  std::vector<Block> blocks_;
  Head head_;
  int feature_tap_ = 0;
  Activation activation_ = Activation::relu;
};

/// Gradient set with the same layout as MlpModel::parameters().
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd head_weights;
  Eigen::VectorXd head_bias;
  double loss = 0.0;

  std::vector<double> flatten() const;
};

/// Dropout is applied to each block's H(x), inverted-scaled, only in train mode.
struct ForwardOptions {
  bool train_mode = false;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

struct ForwardResult {
  Vector scores;
  std::vector<Vector> activations;  // one per block
};

ForwardResult forward(const MlpModel& m, std::span<const double> x, const ForwardOptions& opts = {});

/// Mean cross-entropy of a batch (rows of `x`).
double batch_loss(const MlpModel& m, const Matrix& x, std::span<const int> labels,
                  const ForwardOptions& opts = {});

/// Exact gradients of the mean batch cross-entropy. With dropout the masks
/// are the ones batch_loss draws for the same options.
Gradients backward(const MlpModel& m, const Matrix& x, std::span<const int> labels,
                   const ForwardOptions& opts = {});

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.5;
  double dropout = 0.2;
  int batch_size = 128;
  int epochs = 10;
  double lr_decay_per_epoch = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

/// Momentum SGD over shuffled mini-batches. Throws DivergenceError when the
/// loss or any parameter stops being finite.
TrainResult train(const MlpModel& m, const LabeledDataset& ds, const TrainConfig& cfg);

/// Evaluation-mode activations of the feature tap for every row; labels carried through.
LabeledDataset extract_features(const MlpModel& m, const LabeledDataset& ds);

void save_model(const std::filesystem::path& path, const MlpModel& m);
MlpModel load_model(const std::filesystem::path& path);

}  // namespace cpc
