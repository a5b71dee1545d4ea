#include <cmath>
#include <limits>

#include "hbf/baselines.hpp"
#include "hbf/errors.hpp"
#include "hbf/eval.hpp"

namespace hbf {

namespace {

void check_finite(const ChannelSample& s) {
  for (const auto& h : s.mm_full)
    if (!h.allFinite()) throw InputError("non-finite channel entry in WMMSE input");
}

// Solves V(mu) = (A + mu I)^-1 B with ||V||^2 <= P via an eigendecomposition of A.
Eigen::MatrixXcd power_limited_solve(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B, double P,
                                     double tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A);
  const Eigen::VectorXd lambda = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXcd QB = es.eigenvectors().adjoint() * B;
  const Eigen::VectorXd c = QB.rowwise().squaredNorm();
  const double floor = 1e-12 * std::max(lambda.maxCoeff(), 1e-300);
  const double cmax = std::max(c.maxCoeff(), 1e-300);
  auto power = [&](double mu) {
    double p = 0;
    for (Eigen::Index n = 0; n < lambda.size(); ++n) {
      const double d = lambda[n] + mu;
      if (d <= floor) {
        if (c[n] > 1e-20 * cmax) return std::numeric_limits<double>::infinity();
        continue;
      }
      p += c[n] / (d * d);
    }
    return p;
  };
  auto solve = [&](double mu) {
    Eigen::VectorXd inv(lambda.size());
    for (Eigen::Index n = 0; n < lambda.size(); ++n) {
      const double d = lambda[n] + mu;
      inv[n] = d <= floor ? 0.0 : 1.0 / d;
    }
    return Eigen::MatrixXcd(es.eigenvectors() * (inv.asDiagonal() * QB));
  };
  if (power(0.0) <= P) return solve(0.0);
  double hi = 1e-6 * std::max(1.0, lambda.maxCoeff());
  while (power(hi) > P) hi *= 2;
  double lo = 0;
  while (hi - lo > tol * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (power(mid) > P ? lo : hi) = mid;
  }
  Eigen::MatrixXcd V = solve(hi);
  const double n2 = V.squaredNorm();
  if (n2 > P) V *= std::sqrt(P / n2);
  return V;
}

}  // namespace

DigitalPrecoder wmmse(const ChannelSample& s, const Scenario& sc, const WmmseOptions& o) {
  check_conforms(s, sc);
  check_finite(s);
  const int K = sc.num_bs, U = sc.total_ues(), M = sc.mm_antennas;
  DigitalPrecoder out;
  if (!o.init.empty()) {
    if (static_cast<int>(o.init.size()) != K) throw DimensionError("WMMSE start needs one precoder per BS");
    out.V = o.init;
  } else {
    out.V.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      const int I = sc.ues_per_bs[static_cast<std::size_t>(k)];
      auto& V = out.V[static_cast<std::size_t>(k)];
      V.resize(M, I);
      const double per = std::sqrt(sc.max_power[static_cast<std::size_t>(k)] / I);
      for (int i = 0; i < I; ++i) {
        const auto& h = s.full(sc.ue_index(k, i), k);
        const double n = h.norm();
        V.col(i) = n > 0 ? Eigen::VectorXcd(h * (per / n)) : Eigen::VectorXcd::Constant(M, cd(per / std::sqrt(M), 0));
      }
    }
  }
  out.trace.push_back(sum_rate(out.V, s, sc));
  for (int it = 0; it < o.max_iter; ++it) {
    // Receivers and MSE weights.
    std::vector<cd> u(static_cast<std::size_t>(U));
    std::vector<double> w(static_cast<std::size_t>(U));
    for (int j = 0; j < U; ++j) {
      double total = sc.noise_power;
      cd desired = 0;
      for (int m = 0; m < K; ++m) {
        const Eigen::RowVectorXcd hv = s.full(j, m).adjoint() * out.V[static_cast<std::size_t>(m)];
        total += hv.squaredNorm();
        if (m == sc.serving_bs(j)) desired = hv[sc.local_index(j)];
      }
      u[static_cast<std::size_t>(j)] = desired / total;
      w[static_cast<std::size_t>(j)] = total / (total - std::norm(desired));
    }
    // Transmit vectors per BS.
    for (int k = 0; k < K; ++k) {
      const int I = sc.ues_per_bs[static_cast<std::size_t>(k)];
      Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(M, M);
      for (int j = 0; j < U; ++j) {
        const auto& h = s.full(j, k);
        A.noalias() += (w[static_cast<std::size_t>(j)] * std::norm(u[static_cast<std::size_t>(j)])) * (h * h.adjoint());
      }
      Eigen::MatrixXcd B(M, I);
      for (int i = 0; i < I; ++i) {
        const int j = sc.ue_index(k, i);
        B.col(i) = (w[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)]) * s.full(j, k);
      }
      out.V[static_cast<std::size_t>(k)] =
          power_limited_solve(A, B, sc.max_power[static_cast<std::size_t>(k)], o.bisection_tol);
    }
    out.iterations = it + 1;
    const double r = sum_rate(out.V, s, sc);
    const double gain = r - out.trace.back();
    out.trace.push_back(r);
    if (std::abs(gain) < o.tol) break;
  }
  return out;
}

}  // namespace hbf
