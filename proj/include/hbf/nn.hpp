#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hbf/rng.hpp"

namespace hbf::nn {

using Matrix = Eigen::MatrixXd;     // rows are batch entries
using RowVector = Eigen::RowVectorXd;

enum class Mode { train, eval };

struct DenseLayer {
  Matrix weight;  // in x out
  RowVector bias;
  RowVector bn_scale, bn_shift;  // BatchNorm applied to the layer input
  RowVector running_mean, running_var;
};

struct DenseNetOptions {
  double dropout = 0.0;       // inverted dropout on hidden layers
  bool batch_norm = true;
  bool output_relu = false;   // output layer is linear unless set
};

// Everything backward() needs from one forward() call.
struct DenseCache {
  struct Layer {
    Matrix xhat;            // normalised input (or raw input without BatchNorm)
    RowVector inv_std;
    Matrix pre;             // affine output before activation
    Matrix mask;            // dropout multiplier, empty when unused
  };
  Mode mode = Mode::eval;
  std::vector<Layer> layers;
  bool recorded() const { return !layers.empty(); }
};

// Running statistics of every layer of one net, held apart from it so that
// several call sites can share weights but not normalisation.
struct BatchNormStats {
  std::vector<RowVector> mean, var;
};

// Stack of BatchNorm -> affine -> ReLU -> dropout layers; last layer is
// BatchNorm -> affine. A DenseNet of the same shape doubles as its gradient.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(const std::vector<int>& widths, DenseNetOptions options, Rng& rng);

  static DenseNet zeros_like(const DenseNet& other);

  int input_width() const;
  int output_width() const;
  std::vector<int> widths() const;
  const DenseNetOptions& options() const { return options_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Train mode normalises with batch statistics and updates the running
  // ones; rng drives the dropout mask and may be null when dropout is 0.
  Matrix forward(const Matrix& x, Mode mode, DenseCache* cache = nullptr, Rng* rng = nullptr);

  // Eval-mode forward without side effects; the cache allows backward().
  Matrix predict(const Matrix& x, DenseCache* cache = nullptr) const;

  // Accumulates parameter gradients into `grads` and returns dL/dx.
  Matrix backward(const DenseCache& cache, const Matrix& upstream, DenseNet& grads) const;

  // Trainable tensors (weights, biases, BatchNorm scale/shift) in a fixed order.
  std::vector<std::span<double>> tensors();

  // Running statistics, for checkpointing.
  std::vector<std::span<double>> statistics();

  BatchNormStats stats() const;
  // Exchanges the running statistics with `bank`; shapes must match.
  void swap_stats(BatchNormStats& bank);

  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

 private:
  template <class Self>
  static Matrix run(Self& self, const Matrix& x, Mode mode, DenseCache* cache, Rng* rng);

  std::vector<DenseLayer> layers_;
  DenseNetOptions options_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.9;   // lr multiplier ...
  int decay_every = 5;  // ... applied every this many epochs
};

double scheduled_lr(const AdamOptions& opts, int epoch);

struct AdamState {
  std::vector<Eigen::VectorXd> first, second;
  long step = 0;
};

// One Adam update. Throws TrainingError on a non-finite gradient.
void adam_step(const std::vector<std::span<double>>& params,
               const std::vector<std::span<double>>& grads, AdamState& state,
               const AdamOptions& opts, double lr);

void zero(const std::vector<std::span<double>>& tensors);

}  // namespace hbf::nn
