#include "hbf/nn.hpp"

#include <cmath>
#include <string>
#include <type_traits>

#include "hbf/errors.hpp"

namespace hbf::nn {

namespace {

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace

DenseNet::DenseNet(const std::vector<int>& widths, DenseNetOptions options, Rng& rng)
    : options_(options) {
  if (widths.size() < 2) throw DimensionError("DenseNet needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i], out = widths[i + 1];
    if (out < 1 || in < 0) throw DimensionError("DenseNet widths must be positive");
    DenseLayer l;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    l.weight.resize(in, out);
    for (Eigen::Index j = 0; j < l.weight.size(); ++j) l.weight.data()[j] = dist(rng);
    l.bias = RowVector::Zero(out);
    l.bn_scale = RowVector::Ones(in);
    l.bn_shift = RowVector::Zero(in);
    l.running_mean = RowVector::Zero(in);
    l.running_var = RowVector::Ones(in);
    layers_.push_back(std::move(l));
  }
}

DenseNet DenseNet::zeros_like(const DenseNet& other) {
  DenseNet g;
  g.options_ = other.options_;
  g.bn_momentum = other.bn_momentum;
  g.bn_eps = other.bn_eps;
  for (const auto& l : other.layers_) {
    DenseLayer z;
    z.weight = Matrix::Zero(l.weight.rows(), l.weight.cols());
    z.bias = RowVector::Zero(l.bias.size());
    z.bn_scale = RowVector::Zero(l.bn_scale.size());
    z.bn_shift = RowVector::Zero(l.bn_shift.size());
    z.running_mean = RowVector::Zero(l.running_mean.size());
    z.running_var = RowVector::Zero(l.running_var.size());
    g.layers_.push_back(std::move(z));
  }
  return g;
}

int DenseNet::input_width() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows()); }
int DenseNet::output_width() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

std::vector<int> DenseNet::widths() const {
  std::vector<int> w;
  if (layers_.empty()) return w;
  w.push_back(input_width());
  for (const auto& l : layers_) w.push_back(static_cast<int>(l.weight.cols()));
  return w;
}

Matrix DenseNet::forward(const Matrix& x, Mode mode, DenseCache* cache, Rng* rng) {
  return run(*this, x, mode, cache, rng);
}

Matrix DenseNet::predict(const Matrix& x, DenseCache* cache) const {
  return run(*this, x, Mode::eval, cache, nullptr);
}

// Self is DenseNet (train or eval) or const DenseNet (eval only).
template <class Self>
Matrix DenseNet::run(Self& self, const Matrix& x, Mode mode, DenseCache* cache, Rng* rng) {
  auto& layers_ = self.layers_;
  const auto& options_ = self.options_;
  const double bn_eps = self.bn_eps, bn_momentum = self.bn_momentum;
  const int input_width = self.input_width();
  if (x.cols() != input_width)
    throw DimensionError("DenseNet input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(input_width));
  if (cache) {
    cache->mode = mode;
    cache->layers.assign(layers_.size(), {});
  }
  const Eigen::Index n = x.rows();
  Matrix h = x;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    auto& l = layers_[li];
    const bool last = li + 1 == layers_.size();
    Matrix xhat;
    RowVector inv_std;
    if (options_.batch_norm) {
      RowVector mean, var;
      if (mode == Mode::train && n > 0) {
        mean = h.colwise().mean();
        var = (h.rowwise() - mean).array().square().colwise().mean().matrix();
        if constexpr (!std::is_const_v<Self>) {
          RowVector unbiased = n > 1 ? RowVector(var * (static_cast<double>(n) / static_cast<double>(n - 1))) : var;
          l.running_mean = (1 - bn_momentum) * l.running_mean + bn_momentum * mean;
          l.running_var = (1 - bn_momentum) * l.running_var + bn_momentum * unbiased;
        }
      } else {
        mean = l.running_mean;
        var = l.running_var;
      }
      inv_std = (var.array() + bn_eps).rsqrt().matrix();
      xhat = (h.rowwise() - mean).array().rowwise() * inv_std.array();
      h = (xhat.array().rowwise() * l.bn_scale.array()).rowwise() + l.bn_shift.array();
    } else {
      xhat = h;
    }
    Matrix pre = h * l.weight;
    pre.rowwise() += l.bias;
    Matrix mask;
    if (!last) {
      h = pre.cwiseMax(0.0);
      if (mode == Mode::train && options_.dropout > 0) {
        if (!rng) throw StateError("dropout in train mode needs an rng");
        std::bernoulli_distribution keep(1.0 - options_.dropout);
        const double scale = 1.0 / (1.0 - options_.dropout);
        mask.resize(h.rows(), h.cols());
        for (Eigen::Index j = 0; j < mask.size(); ++j) mask.data()[j] = keep(*rng) ? scale : 0.0;
        h = h.cwiseProduct(mask);
      }
    } else {
      h = options_.output_relu ? Matrix(pre.cwiseMax(0.0)) : pre;
    }
    if (cache) {
      auto& c = cache->layers[li];
      c.xhat = std::move(xhat);
      c.inv_std = std::move(inv_std);
      c.pre = std::move(pre);
      c.mask = std::move(mask);
    }
  }
  return h;
}

Matrix DenseNet::backward(const DenseCache& cache, const Matrix& upstream, DenseNet& grads) const {
  if (!cache.recorded() || cache.layers.size() != layers_.size())
    throw StateError("DenseNet::backward called without a recorded forward pass");
  Matrix g = upstream;
  const double n = static_cast<double>(g.rows());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& l = layers_[li];
    const auto& c = cache.layers[li];
    auto& gl = grads.layers_[li];
    const bool last = li + 1 == layers_.size();
    // activation
    if (!last) {
      if (c.mask.size() > 0) g = g.cwiseProduct(c.mask);
      g = (c.pre.array() > 0).select(g, 0.0);
    } else if (options_.output_relu) {
      g = (c.pre.array() > 0).select(g, 0.0);
    }
    // affine: pre = y W + b
    Matrix y;
    if (options_.batch_norm)
      y = (c.xhat.array().rowwise() * l.bn_scale.array()).rowwise() + l.bn_shift.array();
    else
      y = c.xhat;
    gl.weight.noalias() += y.transpose() * g;
    gl.bias += g.colwise().sum();
    Matrix gy = g * l.weight.transpose();
    if (!options_.batch_norm) {
      g = std::move(gy);
      continue;
    }
    gl.bn_shift += gy.colwise().sum();
    gl.bn_scale += gy.cwiseProduct(c.xhat).colwise().sum();
    Matrix gxhat = gy.array().rowwise() * l.bn_scale.array();
    if (cache.mode == Mode::train && n > 0) {
      RowVector sum_g = gxhat.colwise().sum();
      RowVector sum_gx = gxhat.cwiseProduct(c.xhat).colwise().sum();
      Matrix t = (gxhat * n).rowwise() - sum_g;
      t.array() -= c.xhat.array().rowwise() * sum_gx.array();
      g = (t.array().rowwise() * (c.inv_std.array() / n)).matrix();
    } else {
      g = gxhat.array().rowwise() * c.inv_std.array();
    }
  }
  return g;
}

std::vector<std::span<double>> DenseNet::tensors() {
  std::vector<std::span<double>> t;
  for (auto& l : layers_) {
    t.push_back(span_of(l.weight));
    t.push_back(span_of(l.bias));
    if (options_.batch_norm) {
      t.push_back(span_of(l.bn_scale));
      t.push_back(span_of(l.bn_shift));
    }
  }
  return t;
}

std::vector<std::span<double>> DenseNet::statistics() {
  std::vector<std::span<double>> t;
  for (auto& l : layers_) {
    t.push_back(span_of(l.running_mean));
    t.push_back(span_of(l.running_var));
  }
  return t;
}

BatchNormStats DenseNet::stats() const {
  BatchNormStats s;
  for (const auto& l : layers_) {
    s.mean.push_back(l.running_mean);
    s.var.push_back(l.running_var);
  }
  return s;
}

void DenseNet::swap_stats(BatchNormStats& bank) {
  if (bank.mean.size() != layers_.size() || bank.var.size() != layers_.size())
    throw DimensionError("BatchNorm statistics bank has the wrong layer count");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (bank.mean[i].size() != layers_[i].running_mean.size() || bank.var[i].size() != layers_[i].running_var.size())
      throw DimensionError("BatchNorm statistics bank has the wrong width");
    layers_[i].running_mean.swap(bank.mean[i]);
    layers_[i].running_var.swap(bank.var[i]);
  }
}

double scheduled_lr(const AdamOptions& opts, int epoch) {
  const int steps = opts.decay_every > 0 ? epoch / opts.decay_every : 0;
  return opts.lr * std::pow(opts.decay, steps);
}

void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<double>>& grads, AdamState& state,
               const AdamOptions& opts, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter/gradient count mismatch");
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())));
      state.second.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())));
    }
  }
  if (state.first.size() != params.size()) throw DimensionError("adam_step: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size() || static_cast<Eigen::Index>(params[i].size()) != state.first[i].size())
      throw DimensionError("adam_step: tensor " + std::to_string(i) + " shape mismatch");
    for (double g : grads[i])
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in tensor " + std::to_string(i) + " at step " +
                            std::to_string(state.step + 1));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> p(params[i].data(), static_cast<Eigen::Index>(params[i].size()));
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data(), static_cast<Eigen::Index>(grads[i].size()));
    auto& m = state.first[i];
    auto& v = state.second[i];
    m = opts.beta1 * m + (1 - opts.beta1) * g;
    v = opts.beta2 * v + (1 - opts.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts.eps);
  }
}

void zero(const std::vector<std::span<double>>& tensors) {
  for (auto t : tensors) std::fill(t.begin(), t.end(), 0.0);
}

}  // namespace hbf::nn
