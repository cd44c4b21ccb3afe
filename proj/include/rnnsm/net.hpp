#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rnnsm/features.hpp"

namespace rnnsm::net {

/// Layer widths. Embedding table k has cardinalities[k] + 1 rows (the extra
/// row is the "unknown" category) and embedding_dims[k] columns.
struct NetworkShape {
  std::vector<int> cardinalities;
  std::vector<int> embedding_dims;
  int continuous_width = 0;
  int fusion_width = 16;
  int hidden = 16;

  int fused_input_width() const;
  bool operator==(const NetworkShape&) const = default;
};

void to_json(nlohmann::json& j, const NetworkShape& s);
void from_json(const nlohmann::json& j, NetworkShape& s);

/// Named view into the flat parameter vector. Data is row-major rows x cols.
struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Intermediates of one forward pass, consumed by Network::backward.
struct ForwardCache {
  std::size_t parameter_count = 0;
  int steps = 0;
  std::vector<std::vector<int>> discrete;
  Eigen::MatrixXd input;     // fused input width x steps (embeddings ++ continuous)
  Eigen::MatrixXd fused;     // fusion activations (tanh)
  Eigen::MatrixXd gates;     // 4H x steps: i, f, g, o after activation
  Eigen::MatrixXd cell;      // H x steps
  Eigen::MatrixXd hidden;    // H x steps
  std::vector<double> output;  // o_j
};

/// Embedding lookup -> tanh dense fusion -> LSTM -> single linear neuron.
/// Parameters live in one flat vector so optimizers, gradient checks and
/// checkpoints treat them uniformly.
class Network {
 public:
  Network() = default;
  /// Weights uniform(-0.08, 0.08), forget-gate bias 1, embedding rows unit norm.
  Network(NetworkShape shape, std::uint64_t seed);

  const NetworkShape& shape() const { return shape_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& tensor(const std::string& name) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Row `row` of embedding table k.
  std::span<const double> embedding_row(std::size_t k, int row) const;
  Eigen::MatrixXd embedding_matrix(std::size_t k) const;

  double& output_bias();

  /// Throws NumericalError naming the step on a non-finite activation.
  ForwardCache forward(const features::UserSequence& sequence) const;

  /// Adds d(loss)/d(params) into `gradient` given d(loss)/d(o_j).
  void backward(const ForwardCache& cache, std::span<const double> grad_output,
                std::span<double> gradient) const;

  /// Rescales every embedding row to unit Euclidean norm.
  void project_embeddings();

 private:
  void layout();

  NetworkShape shape_;
  std::vector<TensorInfo> tensors_;
  std::vector<double> params_;
  std::size_t fusion_w_ = 0, fusion_b_ = 0, lstm_w_ = 0, lstm_u_ = 0, lstm_b_ = 0, head_v_ = 0,
              head_b_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;
};

void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Clips the gradient to clip_norm, applies one Adam step and projects the
/// embedding rows back onto the unit sphere.
void apply_update_with_norm_projection(Network& network, std::span<const double> gradient,
                                       AdamState& state, const AdamConfig& config);

/// JSON tensor container: named tensors with shapes, optimizer state and the
/// frozen normalization statistics.
nlohmann::json save_checkpoint(const Network& network, const AdamState& state,
                               const features::NormStats& stats);

struct Checkpoint {
  Network network;
  AdamState optimizer;
  features::NormStats stats;
};
Checkpoint load_checkpoint(const nlohmann::json& j);

}  // namespace rnnsm::net
