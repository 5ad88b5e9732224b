#include "behavsim/embed/model.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "behavsim/error.hpp"
#include "behavsim/io.hpp"

namespace behavsim {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

// Zeroes the gradient where the rectifier was inactive.
void relu_backward(Eigen::MatrixXd& grad, const Eigen::MatrixXd& out) {
  grad = (out.array() > 0.0).select(grad, 0.0);
}

void check_config(const ModelConfig& c) {
  if (c.input_dim < 1 || c.embedding_dim < 1 || c.n_actions < 1 || c.encoder_widths.empty()) {
    throw InvalidArgument("model: dimensions must be positive and the encoder non-empty");
  }
  for (int w : c.encoder_widths) {
    if (w < 1) throw InvalidArgument("model: encoder widths must be positive");
  }
}

std::vector<std::pair<int, int>> layer_shapes(const ModelConfig& c) {
  std::vector<std::pair<int, int>> shapes;  // (out, in)
  int in = c.input_dim;
  for (int w : c.encoder_widths) {
    shapes.emplace_back(w, in);
    in = w;
  }
  shapes.emplace_back(c.embedding_dim, in);
  shapes.emplace_back(c.n_actions, in);
  return shapes;
}

}  // namespace

EmbeddingModel::EmbeddingModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  check_config(config_);
  std::mt19937_64 rng(seed);
  for (auto [out, in] : layer_shapes(config_)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index j = 0; j < l.W.cols(); ++j) {
      for (Eigen::Index i = 0; i < l.W.rows(); ++i) l.W(i, j) = u(rng);
    }
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = u(rng);
    layers_.push_back(std::move(l));
  }
}

EmbeddingModel::EmbeddingModel(const ModelConfig& config, std::vector<Layer> layers)
    : config_(config), layers_(std::move(layers)) {
  check_config(config_);
  const auto shapes = layer_shapes(config_);
  if (layers_.size() != shapes.size()) throw InvalidArgument("model: wrong number of layers");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (layers_[i].W.rows() != shapes[i].first || layers_[i].W.cols() != shapes[i].second ||
        layers_[i].b.size() != shapes[i].first) {
      throw InvalidArgument("model: layer " + std::to_string(i) + " has the wrong shape");
    }
  }
}

ForwardPass EmbeddingModel::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != config_.input_dim) {
    throw InvalidArgument("model: expected inputs with " + std::to_string(config_.input_dim) + " rows, got " +
                          std::to_string(inputs.rows()));
  }
  ForwardPass pass;
  pass.hidden.reserve(config_.encoder_widths.size() + 1);
  pass.hidden.push_back(inputs);
  for (std::size_t i = 0; i < config_.encoder_widths.size(); ++i) {
    const Layer& l = layers_[i];
    pass.hidden.push_back(relu((l.W * pass.hidden.back()).colwise() + l.b));
  }
  const Eigen::MatrixXd& f = pass.hidden.back();
  pass.embedding = relu((projector().W * f).colwise() + projector().b);
  pass.logits = (head().W * f).colwise() + head().b;
  return pass;
}

std::vector<Layer> EmbeddingModel::backward(const ForwardPass& pass, const Eigen::MatrixXd& d_embedding,
                                            const Eigen::MatrixXd& d_logits) const {
  std::vector<Layer> grads = zeros_like(layers_);
  const Eigen::MatrixXd& f = pass.representation();
  Eigen::MatrixXd d_rep = Eigen::MatrixXd::Zero(f.rows(), f.cols());
  const std::size_t n_enc = config_.encoder_widths.size();
  if (d_embedding.size() > 0) {
    Eigen::MatrixXd g = d_embedding;
    relu_backward(g, pass.embedding);
    grads[n_enc].W = g * f.transpose();
    grads[n_enc].b = g.rowwise().sum();
    d_rep += projector().W.transpose() * g;
  }
  if (d_logits.size() > 0) {
    grads[n_enc + 1].W = d_logits * f.transpose();
    grads[n_enc + 1].b = d_logits.rowwise().sum();
    d_rep += head().W.transpose() * d_logits;
  }
  Eigen::MatrixXd g = std::move(d_rep);
  for (std::size_t i = n_enc; i-- > 0;) {
    relu_backward(g, pass.hidden[i + 1]);
    grads[i].W = g * pass.hidden[i].transpose();
    grads[i].b = g.rowwise().sum();
    if (i > 0) g = layers_[i].W.transpose() * g;
  }
  return grads;
}

std::size_t EmbeddingModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

Eigen::VectorXd flatten(const std::vector<Layer>& layers) {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  Eigen::VectorXd flat(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    flat.segment(k, l.W.size()) = l.W.reshaped();
    k += l.W.size();
    flat.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return flat;
}

Eigen::VectorXd EmbeddingModel::flatten() const { return behavsim::flatten(layers_); }

void EmbeddingModel::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
    throw InvalidArgument("model: flat parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (auto& l : layers_) {
    l.W.reshaped() = flat.segment(k, l.W.size());
    k += l.W.size();
    l.b = flat.segment(k, l.b.size());
    k += l.b.size();
  }
}

std::vector<Layer> zeros_like(const std::vector<Layer>& like) {
  std::vector<Layer> out;
  out.reserve(like.size());
  for (const auto& l : like) {
    out.push_back({Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()), Eigen::VectorXd::Zero(l.b.size())});
  }
  return out;
}

void accumulate(std::vector<Layer>& a, const std::vector<Layer>& b, double scale) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i].W += scale * b[i].W;
    a[i].b += scale * b[i].b;
  }
}

nlohmann::json to_json(const EmbeddingModel& model) {
  const auto& c = model.config();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.layers()) layers.push_back({{"W", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}});
  return {{"architecture",
           {{"input_dim", c.input_dim},
            {"encoder_widths", c.encoder_widths},
            {"embedding_dim", c.embedding_dim},
            {"n_actions", c.n_actions},
            {"layer_order", "encoder..., projector, head"}}},
          {"layers", std::move(layers)}};
}

EmbeddingModel embedding_model_from_json(const nlohmann::json& j) {
  const auto& a = j.at("architecture");
  ModelConfig c;
  c.input_dim = a.at("input_dim").get<int>();
  c.encoder_widths = a.at("encoder_widths").get<std::vector<int>>();
  c.embedding_dim = a.at("embedding_dim").get<int>();
  c.n_actions = a.at("n_actions").get<int>();
  std::vector<Layer> layers;
  for (const auto& l : j.at("layers")) {
    layers.push_back({matrix_from_json(l.at("W"), "W"), vector_from_json(l.at("b"), "b")});
  }
  return EmbeddingModel(c, std::move(layers));
}

}  // namespace behavsim
