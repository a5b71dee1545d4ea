#pragma once

// Shared fixtures and independent re-implementations used as oracles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hbf/channel.hpp"
#include "hbf/eval.hpp"
#include "hbf/graph.hpp"
#include "hbf/hgnn.hpp"
#include "hbf/precoder.hpp"

namespace hbf::testing {

inline Scenario small_scenario(int K, int I, int Nm, int Nbar, Structure s = Structure::fully,
                               std::uint64_t seed = 1) {
  Scenario sc;
  sc.num_bs = K;
  sc.ues_per_bs.assign(static_cast<std::size_t>(K), I);
  sc.max_power.assign(static_cast<std::size_t>(K), 1.0);
  sc.mm_antennas = Nm;
  sc.active_antennas = Nbar;
  sc.sub6_antennas = 4;
  sc.num_paths = 3;
  sc.structure = s;
  sc.seed = seed;
  return sc;
}

inline HgnnConfig tiny_model(Structure s = Structure::fully, int D = 8) {
  HgnnConfig c;
  c.layers = 1;
  c.hidden = D;
  c.message_hidden = {6};
  c.combine_hidden = {6};
  c.rf_hidden = {6};
  c.bb_hidden = {5};
  c.dropout = 0.0;
  c.structure = s;
  return c;
}

inline Eigen::MatrixXcd random_complex(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXcd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = {g(rng), g(rng)};
  return m;
}

// Scales F so that ||F||_F^2 = P.
inline Eigen::MatrixXcd at_power(Eigen::MatrixXcd f, double P) {
  const double n = f.norm();
  return n > 0 ? Eigen::MatrixXcd(f * (std::sqrt(P) / n)) : f;
}

// Term-by-term SINR: every inner product and power summed with explicit loops.
inline std::vector<double> oracle_rates(const std::vector<Eigen::MatrixXcd>& F, const ChannelSample& smp,
                                        const Scenario& sc) {
  auto gain = [](const Eigen::VectorXcd& h, const Eigen::MatrixXcd& f, int col) {
    std::complex<double> acc = 0;
    for (int m = 0; m < h.size(); ++m) acc += std::conj(h[m]) * f(m, col);
    return std::norm(acc);
  };
  std::vector<double> rates;
  for (int k = 0; k < sc.num_bs; ++k) {
    for (int i = 0; i < sc.ues_per_bs[static_cast<std::size_t>(k)]; ++i) {
      const int u = sc.ue_index(k, i);
      const auto& hk = smp.full(u, k);
      const double desired = gain(hk, F[static_cast<std::size_t>(k)], i);
      double intra = 0, inter = 0;
      for (int l = 0; l < sc.ues_per_bs[static_cast<std::size_t>(k)]; ++l)
        if (l != i) intra += gain(hk, F[static_cast<std::size_t>(k)], l);
      for (int m = 0; m < sc.num_bs; ++m) {
        if (m == k) continue;
        for (int l = 0; l < sc.ues_per_bs[static_cast<std::size_t>(m)]; ++l)
          inter += gain(smp.full(u, m), F[static_cast<std::size_t>(m)], l);
      }
      rates.push_back(std::log2(1.0 + desired / (intra + inter + sc.noise_power)));
    }
  }
  return rates;
}

inline double total(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

// Random feasible precoders for every BS of the scenario.
inline std::vector<Eigen::MatrixXcd> random_precoders(const Scenario& sc, Rng& rng) {
  std::vector<Eigen::MatrixXcd> F;
  for (int k = 0; k < sc.num_bs; ++k)
    F.push_back(at_power(random_complex(sc.mm_antennas, sc.ues_per_bs[static_cast<std::size_t>(k)], rng),
                         sc.max_power[static_cast<std::size_t>(k)]));
  return F;
}

// Randomises every trainable tensor and BatchNorm statistic of the model.
inline void scramble(HgnnParams& p, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale), pos(0.5, 1.5);
  for (auto& [name, t] : p.named_tensors()) {
    const auto at = name.find(".stat");
    const bool variance = at != std::string::npos && std::stoi(name.substr(at + 5)) % 2 == 1;  // mean, var, ...
    for (double& x : t) x = variance ? pos(rng) : u(rng);
  }
}

// Relabels BSs and the UEs inside each cell. New BS k is old BS bs_perm[k];
// new UE i of new BS k is old UE ue_perm[old BS][i]. ue_map[new] = old global UE.
struct Permuted {
  Scenario scenario;
  ChannelSample sample;
  std::vector<int> ue_map;
};

inline Permuted permute(const ChannelSample& s, const Scenario& sc, const std::vector<int>& bs_perm,
                        const std::vector<std::vector<int>>& ue_perm) {
  Permuted p;
  p.scenario = sc;
  const int K = sc.num_bs;
  for (int k = 0; k < K; ++k) {
    p.scenario.ues_per_bs[static_cast<std::size_t>(k)] = sc.ues_per_bs[static_cast<std::size_t>(bs_perm[k])];
    p.scenario.max_power[static_cast<std::size_t>(k)] = sc.max_power[static_cast<std::size_t>(bs_perm[k])];
  }
  for (int k = 0; k < K; ++k) {
    const int old_k = bs_perm[static_cast<std::size_t>(k)];
    for (int i = 0; i < sc.ues_per_bs[static_cast<std::size_t>(old_k)]; ++i)
      p.ue_map.push_back(sc.ue_index(old_k, ue_perm[static_cast<std::size_t>(old_k)][static_cast<std::size_t>(i)]));
  }
  const int U = sc.total_ues();
  p.sample = s;
  for (int u = 0; u < U; ++u) {
    const int ou = p.ue_map[static_cast<std::size_t>(u)];
    p.sample.sub6.row(u) = s.sub6.row(ou);
    for (int k = 0; k < K; ++k) {
      const int ok = bs_perm[static_cast<std::size_t>(k)];
      p.sample.mm_full[static_cast<std::size_t>(u * K + k)] = s.full(ou, ok);
      p.sample.mm_partial[static_cast<std::size_t>(u * K + k)] = s.partial(ou, ok);
    }
  }
  return p;
}

inline std::vector<double> predict_rates(const HgnnParams& p, const HgnnConfig& c, const ChannelSample& s,
                                         const Scenario& sc) {
  const std::vector<HeteroGraph> g{build_graph(s, sc)};
  return rate_per_ue(predict(p, c, make_batch(g)).front(), s, sc);
}

// Worst |rate_new[u] - rate_old[ue_map[u]]| and sum-SE change over one relabelling.
struct EquivarianceGap {
  double rate = 0, sum = 0;
};

inline EquivarianceGap equivariance_gap(const HgnnParams& p, const HgnnConfig& c, const ChannelSample& s,
                                        const Scenario& sc, const std::vector<int>& bs_perm,
                                        const std::vector<std::vector<int>>& ue_perm) {
  const auto base = predict_rates(p, c, s, sc);
  const auto q = permute(s, sc, bs_perm, ue_perm);
  const auto moved = predict_rates(p, c, q.sample, q.scenario);
  EquivarianceGap g;
  for (std::size_t u = 0; u < moved.size(); ++u)
    g.rate = std::max(g.rate, std::abs(moved[u] - base[static_cast<std::size_t>(q.ue_map[u])]));
  g.sum = std::abs(total(moved) - total(base));
  return g;
}

// Relative error of every analytic parameter gradient of the training loss
// against a central difference, in train mode with batch statistics.
inline std::vector<double> hgnn_gradient_errors(const HgnnConfig& c, const Dataset& data, std::uint64_t seed,
                                                double h = 1e-6) {
  const auto& sc = data.scenario;
  HgnnParams p = HgnnParams::init(c, HgnnDims::of(sc), seed);
  const auto graphs = build_graphs(data);
  const GraphBatch batch = make_batch(graphs);
  std::vector<const ChannelSample*> samples;
  for (const auto& s : data.samples) samples.push_back(&s);
  auto eval_loss = [&]() {
    const auto sols = forward(p, c, batch, nn::Mode::train, nullptr, nullptr);
    return loss(sols, samples, sc, nullptr);
  };
  HgnnTape tape;
  const auto sols = forward(p, c, batch, nn::Mode::train, &tape, nullptr);
  std::vector<std::vector<Eigen::MatrixXcd>> dF;
  (void)loss(sols, samples, sc, &dF);
  HgnnParams g = HgnnParams::zeros_like(p);
  backward(p, c, batch, tape, dF, g);
  auto pt = p.tensors();
  auto gt = g.tensors();
  std::vector<double> rel;
  for (std::size_t t = 0; t < pt.size(); ++t) {
    for (std::size_t i = 0; i < pt[t].size(); ++i) {
      const double keep = pt[t][i];
      pt[t][i] = keep + h;
      const double up = eval_loss();
      pt[t][i] = keep - h;
      const double down = eval_loss();
      pt[t][i] = keep;
      const double fd = (up - down) / (2 * h), an = gt[t][i];
      rel.push_back(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
    }
  }
  return rel;
}

// Per-edge, per-node tally over the actual graph; each MLP call costs
// sum over layers of 2*in*out + 4*in.
inline double tally_flops(const HgnnConfig& c, const Scenario& sc) {
  auto call = [](std::vector<int> w) {
    double f = 0;
    for (std::size_t i = 1; i < w.size(); ++i) f += 2.0 * w[i - 1] * w[i] + 4.0 * w[i - 1];
    return f;
  };
  auto with = [](int in, std::vector<int> hidden, int out) {
    hidden.insert(hidden.begin(), in);
    hidden.push_back(out);
    return hidden;
  };
  const int D = c.hidden, E = 2 * sc.active_antennas;
  const double msg = call(with(D + E, c.message_hidden, D));
  const double att = c.attention ? 2.0 * (2 * D + E) + 2.0 * D : D;
  const double comb = call(with(2 * D, c.combine_hidden, D));
  const double rf = call(with(2 * D, c.rf_hidden, 2 * sc.mm_antennas));
  const double bb = call(with(3 * D + E, c.bb_hidden, 2));
  const auto g = build_graph(gen_sample(sc, 1), sc);
  // Every edge is aggregated once by its BS and once by its UE.
  double layer = 2.0 * static_cast<double>(g.edges.size()) * (msg + att);
  layer += (g.num_bs() + g.num_ues()) * comb;
  double heads = 0;
  for (int k = 0; k < sc.num_bs; ++k) {
    const int I = sc.ues_per_bs[static_cast<std::size_t>(k)];
    heads += I * rf + I * I * bb;
  }
  return c.layers * layer + heads;
}

}  // namespace hbf::testing
