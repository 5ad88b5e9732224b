#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace behavsim {

/// y = W x + b, W is out x in.
struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

struct ModelConfig {
  int input_dim = 900;
  std::vector<int> encoder_widths{256, 256};
  int embedding_dim = 64;
  int n_actions = 2;
};

/// Activations of one batched forward pass (samples are columns).
struct ForwardPass {
  /// hidden[0] is the input, hidden[i] the output of encoder layer i.
  std::vector<Eigen::MatrixXd> hidden;
  Eigen::MatrixXd embedding;
  Eigen::MatrixXd logits;

  const Eigen::MatrixXd& representation() const { return hidden.back(); }
};

/// Encoder f (rectified fully connected stack), projector h (one rectified
/// layer producing z) and affine policy head on the representation.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  /// Weights and biases drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  EmbeddingModel(const ModelConfig& config, std::uint64_t seed);
  EmbeddingModel(const ModelConfig& config, std::vector<Layer> layers);

  const ModelConfig& config() const { return config_; }
  /// Encoder layers, then the projector, then the head.
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const Layer& projector() const { return layers_[layers_.size() - 2]; }
  const Layer& head() const { return layers_.back(); }

  ForwardPass forward(const Eigen::MatrixXd& inputs) const;

  /// Gradients of a loss given its derivatives with respect to the embedding
  /// and the logits (either may be empty, i.e. 0 x 0).
  std::vector<Layer> backward(const ForwardPass& pass, const Eigen::MatrixXd& d_embedding,
                              const Eigen::MatrixXd& d_logits) const;

  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

 private:
  ModelConfig config_;
  std::vector<Layer> layers_;
};

/// Zeros with the same shapes as `like`.
std::vector<Layer> zeros_like(const std::vector<Layer>& like);
/// a += scale * b
void accumulate(std::vector<Layer>& a, const std::vector<Layer>& b, double scale = 1.0);
Eigen::VectorXd flatten(const std::vector<Layer>& layers);

nlohmann::json to_json(const EmbeddingModel& model);
EmbeddingModel embedding_model_from_json(const nlohmann::json& j);

}  // namespace behavsim
