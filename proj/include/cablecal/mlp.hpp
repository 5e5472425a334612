#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace cablecal {

/// Regularization rates of one dense layer, with Keras semantics:
/// kernel/bias penalties add rate * sum(w^2) (or |w|) to the loss, the
/// activity penalty adds rate * sum(a^2) / batch for the layer's output.
struct LayerPenalty {
  double kernel_l1 = 0.0;
  double kernel_l2 = 0.0;
  double bias_l2 = 0.0;
  double activity_l2 = 0.0;

  friend bool operator==(const LayerPenalty&, const LayerPenalty&) = default;
};

/// Fully connected network with sigmoid hidden layers and a linear output.
/// Samples are columns: X is D x B.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;
  };

  Mlp() = default;
  /// Glorot-uniform weights, zero biases.
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::mt19937_64& rng);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().w.cols()); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().w.rows()); }
  std::size_t parameter_count() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Single-sample forward pass into caller-owned scratch (no allocation once
  /// the scratch buffers have their final size).
  void forward_one(const double* x, double* y, std::vector<Eigen::VectorXd>& scratch) const;

  /// Mean squared error over all outputs of the batch plus penalties.
  /// Fills `grads` (same shapes as layers) and returns the loss.
  double loss_and_grad(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const LayerPenalty& hidden,
                       const LayerPenalty& output, std::vector<Layer>& grads) const;

  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const LayerPenalty& hidden,
              const LayerPenalty& output) const;

  /// Flattened parameter view (w then b per layer), for tests and checksums.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& p);

 private:
  std::vector<Layer> layers_;
};

/// Adam with bias correction as in the original algorithm.
class Adam {
 public:
  Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// theta -= lr * m_hat / (sqrt(v_hat) + eps) for every parameter block.
  void step(std::vector<Eigen::Map<Eigen::VectorXd>>& params, const std::vector<Eigen::Map<const Eigen::VectorXd>>& grads);
  void step(Mlp& net, const std::vector<Mlp::Layer>& grads);

  long iterations() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> m_, v_;
};

}  // namespace cablecal
