#include "cablecal/mlp.hpp"

#include <cmath>

#include "cablecal/core.hpp"

namespace cablecal {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

double penalty(const Mlp::Layer& l, const LayerPenalty& p) {
  double s = 0.0;
  if (p.kernel_l1 != 0.0) s += p.kernel_l1 * l.w.cwiseAbs().sum();
  if (p.kernel_l2 != 0.0) s += p.kernel_l2 * l.w.squaredNorm();
  if (p.bias_l2 != 0.0) s += p.bias_l2 * l.b.squaredNorm();
  return s;
}

}  // namespace

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::mt19937_64& rng) {
  if (in == 0 || out == 0) throw InvalidArgument("mlp: zero-width input or output");
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i + 1] == 0) throw InvalidArgument("mlp: zero-width layer");
    const auto fan_in = static_cast<Eigen::Index>(widths[i]);
    const auto fan_out = static_cast<Eigen::Index>(widths[i + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer l;
    l.w.resize(fan_out, fan_in);
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index c = 0; c < fan_in; ++c)
      for (Eigen::Index r = 0; r < fan_out; ++r) l.w(r, c) = u(rng);
    l.b = Eigen::VectorXd::Zero(fan_out);
    layers_.push_back(std::move(l));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].w * a;
    z.colwise() += layers_[i].b;
    a = i + 1 < layers_.size() ? sigmoid(z) : std::move(z);
  }
  return a;
}

void Mlp::forward_one(const double* x, double* y, std::vector<Eigen::VectorXd>& scratch) const {
  scratch.resize(layers_.size());
  Eigen::Map<const Eigen::VectorXd> in(x, layers_.front().w.cols());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& out = scratch[i];
    out.resize(layers_[i].w.rows());
    if (i == 0)
      out.noalias() = layers_[i].w * in;
    else
      out.noalias() = layers_[i].w * scratch[i - 1];
    out += layers_[i].b;
    if (i + 1 < layers_.size()) out = (1.0 + (-out.array()).exp()).inverse().matrix();
  }
  Eigen::Map<Eigen::VectorXd>(y, layers_.back().w.rows()) = scratch.back();
}

double Mlp::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const LayerPenalty& hidden,
                 const LayerPenalty& output) const {
  std::vector<Layer> g;
  return loss_and_grad(x, y, hidden, output, g);
}

double Mlp::loss_and_grad(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const LayerPenalty& hidden,
                          const LayerPenalty& output, std::vector<Layer>& grads) const {
  const std::size_t n_layers = layers_.size();
  const double batch = static_cast<double>(x.cols());
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  acts[0] = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    Eigen::MatrixXd z = layers_[i].w * acts[i];
    z.colwise() += layers_[i].b;
    acts[i + 1] = i + 1 < n_layers ? sigmoid(z) : std::move(z);
  }
  const Eigen::MatrixXd diff = acts[n_layers] - y;
  double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  for (std::size_t i = 0; i < n_layers; ++i) {
    const LayerPenalty& p = i + 1 < n_layers ? hidden : output;
    loss += penalty(layers_[i], p);
    if (p.activity_l2 != 0.0) loss += p.activity_l2 * acts[i + 1].squaredNorm() / batch;
  }

  grads.resize(n_layers);
  // delta holds dL/dz for the current layer.
  Eigen::MatrixXd delta = (2.0 / static_cast<double>(diff.size())) * diff;
  for (std::size_t k = n_layers; k-- > 0;) {
    const LayerPenalty& p = k + 1 < n_layers ? hidden : output;
    if (k + 1 == n_layers && p.activity_l2 != 0.0) delta += (2.0 * p.activity_l2 / batch) * acts[k + 1];
    auto& g = grads[k];
    g.w.noalias() = delta * acts[k].transpose();
    g.b = delta.rowwise().sum();
    if (p.kernel_l2 != 0.0) g.w += 2.0 * p.kernel_l2 * layers_[k].w;
    if (p.kernel_l1 != 0.0) g.w += p.kernel_l1 * layers_[k].w.array().sign().matrix();
    if (p.bias_l2 != 0.0) g.b += 2.0 * p.bias_l2 * layers_[k].b;
    if (k == 0) break;
    // Back through layer k's input, which is the sigmoid output of layer k-1.
    Eigen::MatrixXd da = layers_[k].w.transpose() * delta;
    const LayerPenalty& prev = hidden;
    if (prev.activity_l2 != 0.0) da += (2.0 * prev.activity_l2 / batch) * acts[k];
    delta = da.array() * acts[k].array() * (1.0 - acts[k].array());
  }
  return loss;
}

Eigen::VectorXd Mlp::flatten() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index at = 0;
  for (const auto& l : layers_) {
    p.segment(at, l.w.size()) = l.w.reshaped();
    at += l.w.size();
    p.segment(at, l.b.size()) = l.b;
    at += l.b.size();
  }
  return p;
}

void Mlp::unflatten(const Eigen::VectorXd& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count()) throw InvalidArgument("mlp: parameter count mismatch");
  Eigen::Index at = 0;
  for (auto& l : layers_) {
    l.w.reshaped() = p.segment(at, l.w.size());
    at += l.w.size();
    l.b = p.segment(at, l.b.size());
    at += l.b.size();
  }
}

void Adam::step(std::vector<Eigen::Map<Eigen::VectorXd>>& params,
                const std::vector<Eigen::Map<const Eigen::VectorXd>>& grads) {
  if (params.size() != grads.size()) throw InvalidArgument("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Eigen::VectorXd::Zero(p.size()));
      v_.push_back(Eigen::VectorXd::Zero(p.size()));
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("adam: parameter layout changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

void Adam::step(Mlp& net, const std::vector<Mlp::Layer>& grads) {
  std::vector<Eigen::Map<Eigen::VectorXd>> p;
  std::vector<Eigen::Map<const Eigen::VectorXd>> g;
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto& l = net.layers()[i];
    p.emplace_back(l.w.data(), l.w.size());
    p.emplace_back(l.b.data(), l.b.size());
    g.emplace_back(grads[i].w.data(), grads[i].w.size());
    g.emplace_back(grads[i].b.data(), grads[i].b.size());
  }
  step(p, g);
}

}  // namespace cablecal
