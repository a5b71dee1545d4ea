#pragma once

#include <string>
#include <vector>

#include "hbf/channel.hpp"
#include "hbf/precoder.hpp"

namespace hbf {

struct HgnnConfig;

// Per-UE achievable rate (bits/s/Hz) on the full mmWave channels.
// `precoders[k]` is the N_m x I_k precoder of BS k (columns ordered by UE).
std::vector<double> rate_per_ue(const std::vector<Eigen::MatrixXcd>& precoders, const ChannelSample& sample,
                                const Scenario& scenario);
std::vector<double> rate_per_ue(const PrecoderSolution& sol, const ChannelSample& sample, const Scenario& scenario);

double sum_rate(const std::vector<Eigen::MatrixXcd>& precoders, const ChannelSample& sample, const Scenario& scenario);
double sum_rate(const PrecoderSolution& sol, const ChannelSample& sample, const Scenario& scenario);

// Loss = -sum rate, and dLoss/dF_k for every BS (G = dL/dRe + j dL/dIm).
double sum_rate_loss(const std::vector<Eigen::MatrixXcd>& precoders, const ChannelSample& sample,
                     const Scenario& scenario, std::vector<Eigen::MatrixXcd>* grads);

std::vector<Eigen::MatrixXcd> precoders_of(const PrecoderSolution& sol);

// FLOP count of one DenseNet call on one row: per layer 2*in*out for the
// affine map plus 4*in for BatchNorm and activation.
double mlp_flops(const std::vector<int>& widths);

struct FlopBreakdown {
  double message[4] = {0, 0, 0, 0};    // p_{u,d}, p_{u,i}, p_{b,d}, p_{b,i} per edge
  double attention[4] = {0, 0, 0, 0};  // matching attention cost per edge
  double combine_bs = 0, combine_ue = 0;
  double rf_per_bs = 0;   // C_RF for one BS (all RF chains)
  double bb_per_ue = 0;   // C_BB for one UE column
  double total = 0;
};

// Layer-count-weighted aggregation/combination cost plus output heads.
FlopBreakdown flops_estimate(const HgnnConfig& config, const Scenario& scenario);

enum class OverheadMethod { hgnn, mlp, altmin };
OverheadMethod parse_overhead_method(const std::string& name);

struct Overhead {
  long long pilots = 0;
  long long backhaul = 0;
};

// Pilots(n) = n: one orthogonal pilot per active antenna.
Overhead overhead_report(const Scenario& scenario, OverheadMethod method, Structure structure);
Overhead overhead_report(const Scenario& scenario, const std::string& method, Structure structure);

struct Metrics {
  std::vector<double> rates;
  double sum_se = 0;
  double wallclock_s = 0;
  double flops = 0;
  long long pilot_overhead = 0;
  long long backhaul_overhead = 0;
};

}  // namespace hbf
