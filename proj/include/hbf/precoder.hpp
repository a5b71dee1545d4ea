#pragma once

#include <vector>

#include <Eigen/Dense>

#include "hbf/channel.hpp"

namespace hbf {

// Hybrid precoder of every BS: F_k = analog[k] * baseband[k].
struct PrecoderSolution {
  std::vector<Eigen::MatrixXcd> analog;    // N_m x N_rf,k
  std::vector<Eigen::MatrixXcd> baseband;  // N_rf,k x I_k

  int num_bs() const { return static_cast<int>(analog.size()); }
  Eigen::MatrixXcd precoder(int bs) const { return analog[bs] * baseband[bs]; }
};

// RF chain owning antenna m in the block-diagonal (sub-array) layout.
int subarray_chain(int antenna, int antennas, int chains);

// Raw entries below this modulus are replaced by 1 before normalisation.
inline constexpr double kDegenerateModulus = 1e-12;

// Unit-modulus projection of raw analog entries, scaled by 1/sqrt(N_m).
// For the partially-connected structure only block-diagonal entries survive.
Eigen::MatrixXcd normalize_analog(const Eigen::MatrixXcd& raw, Structure structure);
Eigen::MatrixXcd normalize_analog_backward(const Eigen::MatrixXcd& raw, Structure structure,
                                           const Eigen::MatrixXcd& grad_out);

struct PowerProjection {
  Eigen::MatrixXcd baseband;  // feasible F_BB
  double norm = 0;            // ||F_RF F'_BB||_F
  bool scaled = false;
};

// F_BB = F'_BB when ||F_RF F'_BB||^2 <= P, else sqrt(P) F'_BB / ||F_RF F'_BB||.
PowerProjection project_power(const Eigen::MatrixXcd& analog, const Eigen::MatrixXcd& baseband_raw,
                              double max_power);

// Gradients of a real loss through project_power. Complex gradients use the
// convention G = dL/dRe + j dL/dIm.
void project_power_backward(const Eigen::MatrixXcd& analog, const Eigen::MatrixXcd& baseband_raw,
                            const PowerProjection& proj, double max_power,
                            const Eigen::MatrixXcd& grad_baseband, Eigen::MatrixXcd& grad_analog,
                            Eigen::MatrixXcd& grad_baseband_raw);

// Raw head outputs of one BS turned into a feasible (F_RF, F_BB) pair.
struct HeadRecord {
  Eigen::MatrixXcd analog_raw, baseband_raw;
  Eigen::MatrixXcd analog;
  PowerProjection power;
};

HeadRecord assemble_heads(const Eigen::MatrixXcd& analog_raw, const Eigen::MatrixXcd& baseband_raw,
                          Structure structure, double max_power);

// Backpropagates dL/dF (F = F_RF F_BB) to the raw head outputs.
void assemble_heads_backward(const HeadRecord& rec, Structure structure, double max_power,
                             const Eigen::MatrixXcd& grad_precoder, Eigen::MatrixXcd& grad_analog_raw,
                             Eigen::MatrixXcd& grad_baseband_raw);

// Constraint residuals: power excess (<= 0 when feasible) and worst analog
// modulus / support violation.
struct ConstraintCheck {
  double power_excess = 0;
  double modulus_error = 0;
  double support_error = 0;
  bool ok(double tol) const { return power_excess <= tol && modulus_error <= tol && support_error <= tol; }
};

ConstraintCheck check_constraints(const PrecoderSolution& sol, const Scenario& scenario, Structure structure);

}  // namespace hbf
