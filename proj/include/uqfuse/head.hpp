#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqfuse/dataset.hpp"
#include "uqfuse/rng.hpp"

namespace uqfuse {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Per-hidden-layer keep indicators (entries 0 or 1). Kept activations are
/// divided by keep_prob (inverted dropout).
struct DropoutMask {
  std::array<Eigen::VectorXd, 2> keep;
  double keep_prob = 1.0;
};

/// Binary head d -> h1 -> h2 -> 1 with ReLU on the hidden layers and dropout
/// after each hidden activation.
///
/// Flattened parameter order (used by gradients and Fisher diagonals):
///   layer0.weight (row-major), layer0.bias, layer1.weight, layer1.bias,
///   layer2.weight, layer2.bias.
class ClassifierHead {
 public:
  static constexpr std::size_t kLayers = 3;

  ClassifierHead() = default;
  ClassifierHead(std::array<DenseLayer, kLayers> layers, double dropout_rate);

  static ClassifierHead zeros(std::size_t dim, std::size_t h1, std::size_t h2,
                              double dropout_rate = 0.5);
  /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
  static ClassifierHead glorot(std::size_t dim, std::size_t h1, std::size_t h2,
                               double dropout_rate, std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(layers_[0].weight.cols()); }
  std::size_t hidden1() const { return static_cast<std::size_t>(layers_[0].weight.rows()); }
  std::size_t hidden2() const { return static_cast<std::size_t>(layers_[1].weight.rows()); }
  double dropout_rate() const noexcept { return dropout_rate_; }
  const std::array<DenseLayer, kLayers>& layers() const noexcept { return layers_; }
  std::array<DenseLayer, kLayers>& mutable_layers() noexcept { return layers_; }

  std::size_t num_params() const;
  /// [offset, offset+size) of each layer's weights-then-bias block.
  std::array<std::pair<std::size_t, std::size_t>, kLayers> layer_blocks() const;
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& p);

 private:
  std::array<DenseLayer, kLayers> layers_;
  double dropout_rate_ = 0.0;
};

DropoutMask draw_mask(const ClassifierHead& head, Rng& rng);
DropoutMask ones_mask(const ClassifierHead& head);

/// Output logit. Without a mask the head runs in evaluation mode.
double head_forward(const ClassifierHead& head, std::span<const double> x,
                    const DropoutMask* mask = nullptr);
double head_prob(const ClassifierHead& head, std::span<const double> x);
/// Binary cross-entropy of the evaluation-mode logit.
double head_loss(const ClassifierHead& head, std::span<const double> x, Label y);

Eigen::VectorXd head_grad_params(const ClassifierHead& head, std::span<const double> x, Label y,
                                 const DropoutMask* mask = nullptr);
Eigen::VectorXd head_grad_input(const ClassifierHead& head, std::span<const double> x, Label y);

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Sgd;
  std::size_t h1 = 32;
  std::size_t h2 = 16;
  double dropout_rate = 0.5;
};

ClassifierHead head_train(const EmbeddingDataset& data, const TrainConfig& cfg);

double accuracy(const ClassifierHead& head, const EmbeddingDataset& data);

std::string head_to_json(const ClassifierHead& head);
ClassifierHead head_from_json(const std::string& text, const std::string& origin = "<memory>");

double sigmoid(double z) noexcept;
/// log(1 + exp(z)) without overflow.
double softplus(double z) noexcept;

}  // namespace uqfuse
