#include <cmath>
#include <numbers>

#include "hbf/baselines.hpp"
#include "hbf/errors.hpp"

namespace hbf {

namespace {

using Mat = Eigen::MatrixXcd;

Mat pinv(const Mat& a) {
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(a);
  return cod.pseudoInverse();
}

Mat random_phases(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  Mat x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::polar(1.0, phase(rng));
  return x;
}

Mat tangent(const Mat& g, const Mat& x) {
  return g - Mat((g.array() * x.array().conjugate()).real().cast<cd>() * x.array());
}

Mat retract(const Mat& y) {
  Mat x = y;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double m = std::abs(x.data()[i]);
    x.data()[i] = m < kDegenerateModulus ? cd(1, 0) : x.data()[i] / m;
  }
  return x;
}

double inner(const Mat& a, const Mat& b) { return (a.array().conjugate() * b.array()).sum().real(); }

void scale_to_power(AltMinResult& r, double P) {
  const double n = (r.analog * r.baseband).norm();
  if (n > 0) r.baseband *= std::sqrt(P) / n;
}

void check_target(const Mat& f_opt, int rf_chains) {
  if (!f_opt.allFinite()) throw InputError("non-finite AltMin target");
  if (rf_chains < f_opt.cols() || rf_chains > f_opt.rows())
    throw DimensionError("AltMin needs I_k <= N_rf <= N_m");
}

struct Run {
  Mat x, bb;  // unit-modulus analog (times sqrt(N_m)) and baseband
  AltMinReport report;
  double objective = 0;
};

Run mo_run(const Mat& f_opt, Mat x, const AltMinOptions& o) {
  const double s = 1.0 / std::sqrt(static_cast<double>(f_opt.rows()));
  Run r;
  auto obj = [&](const Mat& xx, const Mat& bb) { return (f_opt - s * xx * bb).squaredNorm(); };
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < o.max_iter; ++it) {
    const Mat bb = pinv(s * x) * f_opt;
    // Conjugate gradient on the torus with F_BB held fixed.
    Mat grad, dir;
    double f = obj(x, bb);
    for (int cg = 0; cg < o.inner_iter; ++cg) {
      const Mat egrad = -2.0 * s * (f_opt - s * x * bb) * bb.adjoint();
      Mat g = tangent(egrad, x);
      const double gg = inner(g, g);
      if (gg < 1e-30) break;
      if (cg == 0) {
        dir = -g;
      } else {
        const Mat old_g = tangent(grad, x), old_d = tangent(dir, x);
        const double beta = std::max(0.0, inner(g, g - old_g) / std::max(inner(grad, grad), 1e-300));
        dir = -g + beta * old_d;
        if (inner(g, dir) >= 0) dir = -g;
      }
      grad = g;
      const double slope = inner(g, dir);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        const Mat cand = retract(x + step * dir);
        const double fc = obj(cand, bb);
        if (fc <= f + 1e-4 * step * slope) {
          x = cand;
          f = fc;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    // Exact least squares again so the recorded objective is consistent.
    r.bb = pinv(s * x) * f_opt;
    const double cur = obj(x, r.bb);
    r.report.trace.push_back(std::sqrt(cur));
    r.report.iterations = it + 1;
    if (prev - cur < o.tol) {
      r.report.converged = true;
      break;
    }
    prev = cur;
  }
  r.x = x;
  r.objective = obj(x, r.bb);
  return r;
}

Run pc_run(const Mat& f_opt, Mat x, int N, const AltMinOptions& o) {
  const int M = static_cast<int>(f_opt.rows());
  const double s = 1.0 / std::sqrt(static_cast<double>(M));
  // x holds one unit phase per antenna; F_RF places it in the owning chain.
  auto analog = [&](const Mat& phases) {
    Mat a = Mat::Zero(M, N);
    for (int m = 0; m < M; ++m) a(m, subarray_chain(m, M, N)) = s * phases(m, 0);
    return a;
  };
  Run r;
  double prev = std::numeric_limits<double>::infinity();
  Mat bb = static_cast<double>(N) * analog(x).adjoint() * f_opt;
  for (int it = 0; it < o.max_iter; ++it) {
    const Mat c = f_opt * bb.adjoint();
    for (int m = 0; m < M; ++m) {
      const cd v = c(m, subarray_chain(m, M, N));
      if (std::abs(v) > 0) x(m, 0) = v / std::abs(v);
    }
    const Mat a = analog(x);
    bb = static_cast<double>(N) * a.adjoint() * f_opt;
    const double cur = (f_opt - a * bb).squaredNorm();
    r.report.trace.push_back(std::sqrt(cur));
    r.report.iterations = it + 1;
    if (prev - cur < o.tol) {
      r.report.converged = true;
      break;
    }
    prev = cur;
  }
  r.x = analog(x);
  r.bb = bb;
  r.objective = (f_opt - r.x * bb).squaredNorm();
  return r;
}

template <class F>
AltMinResult best_of(const AltMinOptions& o, F&& run_one) {
  Rng rng(derive_seed(o.seed, {0xa17'4d1eULL}));
  const int tries = o.init ? 1 : std::max(1, o.restarts);
  Run best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int t = 0; t < tries; ++t) {
    Run r = run_one(rng);
    if (r.objective < best.objective) best = std::move(r);
  }
  AltMinResult out;
  out.analog = std::move(best.x);
  out.baseband = std::move(best.bb);
  out.report = std::move(best.report);
  return out;
}

}  // namespace

double ls_residual(const Mat& f_opt, const Mat& analog) {
  return (f_opt - analog * (pinv(analog) * f_opt)).squaredNorm();
}

AltMinResult mo_altmin(const Mat& f_opt, int rf_chains, double P, const AltMinOptions& o) {
  check_target(f_opt, rf_chains);
  const auto M = f_opt.rows();
  auto res = best_of(o, [&](Rng& rng) {
    return mo_run(f_opt, o.init ? retract(*o.init) : random_phases(M, rf_chains, rng), o);
  });
  res.analog /= std::sqrt(static_cast<double>(M));
  scale_to_power(res, P);
  return res;
}

AltMinResult pc_altmin(const Mat& f_opt, int rf_chains, double P, const AltMinOptions& o) {
  check_target(f_opt, rf_chains);
  const int M = static_cast<int>(f_opt.rows());
  if (M % rf_chains != 0) throw DimensionError("partially-connected AltMin needs N_m divisible by N_rf");
  auto res = best_of(o, [&](Rng& rng) {
    Mat x(M, 1);
    if (o.init) {
      // Take each antenna's phase from its own chain's column.
      for (int m = 0; m < M; ++m) x(m, 0) = (*o.init)(m, subarray_chain(m, M, rf_chains));
      x = retract(x);
    } else {
      x = random_phases(M, 1, rng);
    }
    return pc_run(f_opt, x, rf_chains, o);
  });
  scale_to_power(res, P);
  return res;
}

std::string altmin_label(Structure s) { return s == Structure::fully ? "MO-AltMin" : "PC-AltMin (LS)"; }

PrecoderSolution factorize(const DigitalPrecoder& digital, const Scenario& sc, Structure structure,
                           const AltMinOptions& altmin, std::vector<AltMinReport>* reports) {
  PrecoderSolution out;
  for (int k = 0; k < sc.num_bs; ++k) {
    const auto& f_opt = digital.V.at(static_cast<std::size_t>(k));
    AltMinOptions o = altmin;
    o.seed = derive_seed(altmin.seed, {static_cast<std::uint64_t>(k)});
    const int n_rf = sc.rf_chains(k);
    const double P = sc.max_power[static_cast<std::size_t>(k)];
    AltMinResult r = structure == Structure::fully ? mo_altmin(f_opt, n_rf, P, o) : pc_altmin(f_opt, n_rf, P, o);
    out.analog.push_back(std::move(r.analog));
    out.baseband.push_back(std::move(r.baseband));
    if (reports) reports->push_back(std::move(r.report));
  }
  return out;
}

HybridBaseline altmin_baseline(const ChannelSample& sample, const Scenario& sc, Structure structure,
                               const AltMinOptions& altmin, const WmmseOptions& wo) {
  HybridBaseline out;
  out.digital = wmmse(sample, sc, wo);
  out.hybrid = factorize(out.digital, sc, structure, altmin, &out.reports);
  return out;
}

}  // namespace hbf
