#include "hbf/precoder.hpp"

#include <algorithm>
#include <cmath>

#include "hbf/errors.hpp"

namespace hbf {

int subarray_chain(int antenna, int antennas, int chains) {
  return static_cast<int>((static_cast<long long>(antenna) * chains) / antennas);
}

Eigen::MatrixXcd normalize_analog(const Eigen::MatrixXcd& raw, Structure structure) {
  const auto M = raw.rows(), N = raw.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(M, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      if (structure == Structure::partially &&
          subarray_chain(static_cast<int>(m), static_cast<int>(M), static_cast<int>(N)) != n)
        continue;
      const cd r = raw(m, n);
      const double mod = std::abs(r);
      out(m, n) = mod < kDegenerateModulus ? cd(scale, 0) : r * (scale / mod);
    }
  }
  return out;
}

Eigen::MatrixXcd normalize_analog_backward(const Eigen::MatrixXcd& raw, Structure structure,
                                           const Eigen::MatrixXcd& grad_out) {
  const auto M = raw.rows(), N = raw.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(M, N);
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index m = 0; m < M; ++m) {
      if (structure == Structure::partially &&
          subarray_chain(static_cast<int>(m), static_cast<int>(M), static_cast<int>(N)) != n)
        continue;
      const cd r = raw(m, n);
      const double mod = std::abs(r);
      if (mod < kDegenerateModulus) continue;
      // d(r/|r|): remove the radial component, divide by |r|.
      const cd z = r / mod;
      const cd gz = grad_out(m, n) * scale;
      const double radial = (gz * std::conj(z)).real();
      g(m, n) = (gz - radial * z) / mod;
    }
  }
  return g;
}

PowerProjection project_power(const Eigen::MatrixXcd& analog, const Eigen::MatrixXcd& baseband_raw,
                              double max_power) {
  PowerProjection p;
  p.norm = (analog * baseband_raw).norm();
  if (p.norm * p.norm <= max_power || p.norm == 0.0) {
    p.baseband = baseband_raw;
    p.scaled = false;
  } else {
    p.baseband = baseband_raw * (std::sqrt(max_power) / p.norm);
    p.scaled = true;
  }
  return p;
}

void project_power_backward(const Eigen::MatrixXcd& analog, const Eigen::MatrixXcd& baseband_raw,
                            const PowerProjection& proj, double max_power,
                            const Eigen::MatrixXcd& grad_baseband, Eigen::MatrixXcd& grad_analog,
                            Eigen::MatrixXcd& grad_baseband_raw) {
  grad_analog = Eigen::MatrixXcd::Zero(analog.rows(), analog.cols());
  if (!proj.scaled) {
    grad_baseband_raw = grad_baseband;
    return;
  }
  const double n = proj.norm, sp = std::sqrt(max_power);
  const Eigen::MatrixXcd y = analog * baseband_raw;
  // c = Re <G_BB, F'_BB>; d||Y|| = Re<Y, dY> / ||Y||.
  const double c = (grad_baseband.adjoint() * baseband_raw).trace().real();
  const double k = sp * c / (n * n * n);
  grad_baseband_raw = (sp / n) * grad_baseband - k * (analog.adjoint() * y);
  grad_analog = -k * (y * baseband_raw.adjoint());
}

HeadRecord assemble_heads(const Eigen::MatrixXcd& analog_raw, const Eigen::MatrixXcd& baseband_raw,
                          Structure structure, double max_power) {
  if (baseband_raw.rows() != analog_raw.cols())
    throw DimensionError("baseband rows must equal the RF chain count");
  HeadRecord r;
  r.analog_raw = analog_raw;
  r.baseband_raw = baseband_raw;
  r.analog = normalize_analog(analog_raw, structure);
  r.power = project_power(r.analog, baseband_raw, max_power);
  return r;
}

void assemble_heads_backward(const HeadRecord& rec, Structure structure, double max_power,
                             const Eigen::MatrixXcd& grad_precoder, Eigen::MatrixXcd& grad_analog_raw,
                             Eigen::MatrixXcd& grad_baseband_raw) {
  // F = F_RF F_BB
  Eigen::MatrixXcd g_analog = grad_precoder * rec.power.baseband.adjoint();
  Eigen::MatrixXcd g_bb = rec.analog.adjoint() * grad_precoder;
  Eigen::MatrixXcd g_analog_proj;
  project_power_backward(rec.analog, rec.baseband_raw, rec.power, max_power, g_bb, g_analog_proj,
                         grad_baseband_raw);
  g_analog += g_analog_proj;
  grad_analog_raw = normalize_analog_backward(rec.analog_raw, structure, g_analog);
}

ConstraintCheck check_constraints(const PrecoderSolution& sol, const Scenario& sc, Structure structure) {
  ConstraintCheck c;
  c.power_excess = -std::numeric_limits<double>::infinity();
  if (sol.num_bs() != sc.num_bs) throw DimensionError("solution BS count does not match scenario");
  for (int k = 0; k < sc.num_bs; ++k) {
    const auto& a = sol.analog[static_cast<std::size_t>(k)];
    const double power = sol.precoder(k).squaredNorm();
    c.power_excess = std::max(c.power_excess, power - sc.max_power[static_cast<std::size_t>(k)]);
    const double target = 1.0 / std::sqrt(static_cast<double>(a.rows()));
    for (Eigen::Index n = 0; n < a.cols(); ++n) {
      for (Eigen::Index m = 0; m < a.rows(); ++m) {
        const bool on_block = structure == Structure::fully ||
                              subarray_chain(static_cast<int>(m), static_cast<int>(a.rows()),
                                             static_cast<int>(a.cols())) == n;
        if (on_block)
          c.modulus_error = std::max(c.modulus_error, std::abs(std::abs(a(m, n)) - target));
        else
          c.support_error = std::max(c.support_error, std::abs(a(m, n)));
      }
    }
  }
  return c;
}

}  // namespace hbf
