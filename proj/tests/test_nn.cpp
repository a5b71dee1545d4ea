#include <cmath>
#include <limits>

#include "doctest.h"
#include "hbf/errors.hpp"
#include "hbf/nn.hpp"

using namespace hbf;
using namespace hbf::nn;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> g(0, 1);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

void randomize(DenseNet& net, Rng& rng) {
  std::uniform_real_distribution<double> u(-0.8, 0.8), pos(0.5, 2.0);
  for (auto t : net.tensors())
    for (double& x : t) x = u(rng);
  auto s = net.statistics();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (double& x : s[i]) x = i % 2 ? pos(rng) : u(rng);
}

// Independent evaluation with running statistics, one row and one unit at a time.
Matrix straight_line(const DenseNet& net, const Matrix& x) {
  Matrix out(x.rows(), net.output_width());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> h(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index c = 0; c < x.cols(); ++c) h[static_cast<std::size_t>(c)] = x(r, c);
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
      const auto& l = net.layers()[li];
      std::vector<double> next(static_cast<std::size_t>(l.weight.cols()), 0.0);
      for (std::size_t i = 0; i < h.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        h[i] = (h[i] - l.running_mean[ii]) / std::sqrt(l.running_var[ii] + 1e-5) * l.bn_scale[ii] + l.bn_shift[ii];
      }
      for (Eigen::Index o = 0; o < l.weight.cols(); ++o) {
        double acc = l.bias[o];
        for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * l.weight(static_cast<Eigen::Index>(i), o);
        next[static_cast<std::size_t>(o)] = li + 1 < net.layers().size() ? std::max(acc, 0.0) : acc;
      }
      h = next;
    }
    for (std::size_t o = 0; o < h.size(); ++o) out(r, static_cast<Eigen::Index>(o)) = h[o];
  }
  return out;
}

}  // namespace

TEST_CASE("identity layer passes input through") {
  Rng rng(1);
  DenseNet net({3, 3}, {}, rng);
  net.layers()[0].weight = Matrix::Identity(3, 3);
  const Matrix x = random_matrix(4, 3, rng);
  net.bn_eps = 0;
  CHECK((net.predict(x) - x).norm() < 1e-14);
}

TEST_CASE("eval forward matches straight-line evaluation") {
  Rng rng(2);
  DenseNet net({5, 7, 3}, {0.3, true, false}, rng);
  randomize(net, rng);
  const Matrix x = random_matrix(6, 5, rng);
  const Matrix got = net.predict(x);
  CHECK((got - straight_line(net, x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.forward(x, Mode::eval) == got);
  CHECK_THROWS_AS(net.predict(random_matrix(2, 4, rng)), DimensionError);
}

TEST_CASE("dropout off: train equals eval once statistics are frozen to the batch") {
  Rng rng(3);
  DenseNet net({4, 6, 2}, {0.0, true, false}, rng);
  const Matrix x = random_matrix(8, 4, rng);
  DenseNet frozen = net;
  frozen.bn_momentum = 1.0;  // running stats become the batch stats
  const Matrix train_out = frozen.forward(x, Mode::train);
  // The running variance is unbiased; the batch normaliser is not.
  for (auto& l : frozen.layers()) l.running_var *= 7.0 / 8.0;
  CHECK((frozen.predict(x) - train_out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predict leaves running statistics alone, train updates them") {
  Rng rng(4);
  DenseNet net({3, 4, 2}, {}, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const DenseNet before = net;
  (void)net.predict(x);
  CHECK(net.layers()[0].running_mean == before.layers()[0].running_mean);
  (void)net.forward(x, Mode::train);
  const RowVector expect = 0.1 * x.colwise().mean();
  CHECK((net.layers()[0].running_mean - expect).norm() < 1e-14);
}

TEST_CASE("batch norm is equivariant to batch row permutations") {
  Rng rng(5);
  DenseNet net({4, 5, 3}, {}, rng);
  const Matrix x = random_matrix(6, 4, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
  perm.indices() << 3, 0, 5, 1, 2, 4;
  DenseNet a = net, b = net;
  const Matrix ya = a.forward(x, Mode::train);
  const Matrix yb = b.forward(perm * x, Mode::train);
  CHECK((perm * ya - yb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward matches central differences through batch statistics") {
  Rng rng(6);
  DenseNet net({4, 6, 5, 3}, {0.0, true, false}, rng);
  randomize(net, rng);
  const Matrix x = random_matrix(7, 4, rng);
  const Matrix w = random_matrix(7, 3, rng);  // loss = sum(w .* y)
  auto loss = [&](DenseNet& n, const Matrix& in) {
    DenseNet copy = n;
    return copy.forward(in, Mode::train).cwiseProduct(w).sum();
  };
  DenseCache cache;
  DenseNet fwd = net;
  (void)fwd.forward(x, Mode::train, &cache);
  DenseNet grads = DenseNet::zeros_like(net);
  const Matrix dx = net.backward(cache, w, grads);

  const double h = 1e-5;
  auto params = net.tensors();
  auto g = grads.tensors();
  double worst = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double keep = params[t][i];
      params[t][i] = keep + h;
      const double up = loss(net, x);
      params[t][i] = keep - h;
      const double down = loss(net, x);
      params[t][i] = keep;
      const double fd = (up - down) / (2 * h);
      const double rel = std::abs(fd - g[t][i]) / std::max({std::abs(fd), std::abs(g[t][i]), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);

  double worst_x = 0;
  Matrix xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = xp.data()[i];
    xp.data()[i] = keep + h;
    const double up = loss(net, xp);
    xp.data()[i] = keep - h;
    const double down = loss(net, xp);
    xp.data()[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst_x = std::max(worst_x, std::abs(fd - dx.data()[i]) / std::max({std::abs(fd), 1e-6}));
  }
  CHECK(worst_x < 1e-4);
}

TEST_CASE("backward respects the sampled dropout mask") {
  Rng rng(7);
  DenseNet net({3, 8, 2}, {0.5, true, false}, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix w = random_matrix(5, 2, rng);
  DenseCache cache;
  DenseNet fwd = net;
  Rng drop(99);
  (void)fwd.forward(x, Mode::train, &cache, &drop);
  DenseNet grads = DenseNet::zeros_like(net);
  (void)net.backward(cache, w, grads);
  // Same mask replayed through a finite difference on one output weight.
  auto loss = [&]() {
    DenseNet c = net;
    Rng r(99);
    return c.forward(x, Mode::train, nullptr, &r).cwiseProduct(w).sum();
  };
  auto& W = net.layers()[1].weight;
  const double keep = W(2, 1), h = 1e-6;
  W(2, 1) = keep + h;
  const double up = loss();
  W(2, 1) = keep - h;
  const double down = loss();
  W(2, 1) = keep;
  CHECK(std::abs((up - down) / (2 * h) - grads.layers()[1].weight(2, 1)) < 1e-6);
}

TEST_CASE("zero upstream, dead units and missing forward") {
  Rng rng(8);
  DenseNet net({3, 4, 2}, {0.0, false, false}, rng);
  const Matrix x = random_matrix(4, 3, rng);
  DenseCache cache;
  (void)net.forward(x, Mode::train, &cache);
  DenseNet grads = DenseNet::zeros_like(net);
  const Matrix dx = net.backward(cache, Matrix::Zero(4, 2), grads);
  CHECK(dx.norm() == 0);
  for (auto t : grads.tensors())
    for (double v : t) CHECK(v == 0);

  // Force hidden unit 1 dead on every row.
  net.layers()[0].weight.col(1).setZero();
  net.layers()[0].bias[1] = -1.0;
  (void)net.forward(x, Mode::train, &cache);
  DenseNet g2 = DenseNet::zeros_like(net);
  (void)net.backward(cache, Matrix::Ones(4, 2), g2);
  CHECK(g2.layers()[0].weight.col(1).norm() == 0);
  CHECK(g2.layers()[0].bias[1] == 0);

  CHECK_THROWS_AS(net.backward(DenseCache{}, Matrix::Ones(4, 2), g2), StateError);
}

TEST_CASE("adam: zero gradient, constant gradient and non-finite gradient") {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  std::vector<std::span<double>> P{p}, G{g};
  AdamState st;
  AdamOptions o;
  adam_step(P, G, st, o, 1e-3);
  CHECK(p == std::vector<double>{1.0, -2.0});

  g = {0.3, -5.0};
  double last = 0;
  for (int i = 0; i < 2000; ++i) {
    const double before = p[0];
    adam_step(P, G, st, o, 1e-3);
    last = before - p[0];
  }
  CHECK(std::abs(last - 1e-3) < 1e-6);

  g[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(P, G, st, o, 1e-3), TrainingError);
}

TEST_CASE("learning-rate schedule") {
  AdamOptions o;
  for (int e = 0; e < 5; ++e) CHECK(scheduled_lr(o, e) == doctest::Approx(0.001).epsilon(1e-15));
  for (int e = 5; e < 10; ++e) CHECK(scheduled_lr(o, e) == doctest::Approx(0.0009).epsilon(1e-12));
  CHECK(scheduled_lr(o, 12) == doctest::Approx(0.00081).epsilon(1e-12));
}
