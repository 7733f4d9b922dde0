#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "embattr/embedding_store.hpp"

namespace embattr {

enum class Activation { relu, identity };

/// Stack of affine layers mapping raw embeddings into the contrastive latent
/// space. Layer l holds an (out x in) weight matrix and a bias of length out;
/// the activation is applied between layers, never after the last one.
class ProjectionHead {
 public:
  struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
  };

  /// Intermediate values of a forward pass, kept for backward().
  struct Tape {
    std::vector<Matrix> inputs;  ///< input to each layer
    std::vector<Matrix> pre;     ///< affine output of each layer
  };

  /// All parameters zero.
  explicit ProjectionHead(std::vector<std::size_t> layer_dims,
                          Activation activation = Activation::relu);

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn
  /// layer by layer (weights row-major, then bias) from Rng(seed).
  static ProjectionHead init_uniform(std::vector<std::size_t> layer_dims, std::uint64_t seed,
                                     Activation activation = Activation::relu);

  const std::vector<std::size_t>& layer_dims() const noexcept { return dims_; }
  std::size_t layer_count() const noexcept { return weights_.size(); }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t output_dim() const noexcept { return dims_.back(); }
  Activation activation() const noexcept { return activation_; }

  const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
  const Vector& bias(std::size_t layer) const { return biases_.at(layer); }
  Matrix& weight(std::size_t layer) { return weights_.at(layer); }
  Vector& bias(std::size_t layer) { return biases_.at(layer); }

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Tape& tape) const;
  Gradients backward(const Tape& tape, const Matrix& grad_output) const;

  /// Parameters in checkpoint order: per layer, weights row-major then bias.
  std::vector<double> parameters() const;
  void set_parameters(const std::vector<double>& params);
  std::size_t parameter_count() const;

  /// params -= learning_rate * grads
  void step(const Gradients& grads, double learning_rate);
  bool all_finite() const;

  friend bool operator==(const ProjectionHead& a, const ProjectionHead& b);

 private:
  std::vector<std::size_t> dims_;
  Activation activation_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Applies the head to every record of `set`, keeping labels and order.
EmbeddingSet project(const ProjectionHead& head, const EmbeddingSet& set);

// Checkpoint layout (little-endian): magic "HEAD", version u32 = 1,
// layer count u32, (layer count + 1) dims as u32, then f32 parameters in
// parameters() order. Heads read back use the rectifier activation.
void write_head(const ProjectionHead& head, std::ostream& out);
ProjectionHead read_head(std::istream& in);
void save_head(const ProjectionHead& head, const std::filesystem::path& path);
ProjectionHead load_head(const std::filesystem::path& path);

}  // namespace embattr
