#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hbf/rng.hpp"

namespace hbf {

using cd = std::complex<double>;

enum class Structure { fully, partially };

std::string to_string(Structure s);
Structure parse_structure(const std::string& s);

// Full experiment configuration for the dual-band multi-cell network.
// RF chain count per BS is always I_k (one chain per served UE).
struct Scenario {
  int num_bs = 2;                          // K
  std::vector<int> ues_per_bs{2, 2};       // I_k
  int mm_antennas = 16;                    // N_m
  int sub6_antennas = 8;                   // N_s
  int active_antennas = 4;                 // N_bar
  int num_paths = 5;                       // N_c
  std::vector<double> max_power{1.0, 1.0}; // P_k, watts
  double noise_power = 0.1;                // sigma^2, watts
  double mm_bandwidth = 100e6;
  double sub6_bandwidth = 10e6;
  std::uint64_t seed = 1;
  Structure structure = Structure::fully;

  int total_ues() const;
  int rf_chains(int bs) const { return ues_per_bs.at(bs); }
  int serving_bs(int ue) const;
  // Global index of the i-th UE served by BS k; UEs are ordered by (k, i).
  int ue_index(int bs, int local) const;
  int local_index(int ue) const;

  // Empty when valid; otherwise one message per violated invariant.
  std::vector<std::string> violations() const;
  void validate() const;  // throws ValidationError
};

// Multipath parameters of one link, shared by both bands.
struct PathSet {
  std::vector<double> aods;    // radians, (-pi/2, pi/2)
  std::vector<double> gains;   // >= 0
  std::vector<double> phases;  // radians, [0, 2pi)
  std::vector<double> delays;  // seconds
  std::size_t size() const { return aods.size(); }
};

// One network realisation. mm_full / mm_partial are indexed ue * num_bs + bs.
struct ChannelSample {
  int num_bs = 0;
  Eigen::MatrixXcd sub6;  // I_sum x N_s; row u is h~_u^T
  std::vector<Eigen::VectorXcd> mm_full;
  std::vector<int> active_idx;
  std::vector<Eigen::VectorXcd> mm_partial;

  const Eigen::VectorXcd& full(int ue, int bs) const { return mm_full[ue * num_bs + bs]; }
  const Eigen::VectorXcd& partial(int ue, int bs) const { return mm_partial[ue * num_bs + bs]; }
  int num_ues() const { return static_cast<int>(sub6.rows()); }
};

enum class Split { train, test };
std::string to_string(Split s);

struct Dataset {
  Scenario scenario;
  std::vector<ChannelSample> samples;
  Split split = Split::train;
};

// Half-wavelength ULA steering vector with unit norm.
Eigen::VectorXcd array_response(double aod, int antennas);

// Draws N_c paths: dominant path of unit gain, weaker paths |CN(0, 0.1)|.
PathSet gen_paths(const Scenario& scenario, Rng& rng);

// sqrt(N/N_c) * sum_l beta_l exp(j(theta_l + 2 pi tau_l B)) a(phi_l).
Eigen::VectorXcd synth_channel(const PathSet& paths, int antennas, double bandwidth);

Eigen::VectorXcd extract_partial(const Eigen::VectorXcd& full, const std::vector<int>& active_idx);

// Rotates the whole vector by one phase drawn from N(0, sigma_deg^2).
Eigen::VectorXcd apply_phase_error(const Eigen::VectorXcd& h, double sigma_deg, Rng& rng);

// Returns a copy with an independent phase error on every partial-CSI vector.
ChannelSample with_phase_error(const ChannelSample& sample, double sigma_deg, Rng& rng);

// floor(t * N_m / N_bar) for t = 0..N_bar-1.
std::vector<int> uniform_active_indices(int mm_antennas, int active_antennas);

ChannelSample gen_sample(const Scenario& scenario, std::uint64_t sample_seed);

// Samples are generated from seeds derived from (seed, split, index).
Dataset gen_dataset(const Scenario& scenario, int count, std::uint64_t seed, Split split = Split::train);

void check_conforms(const ChannelSample& sample, const Scenario& scenario);

// Dataset files: <stem>.json manifest plus <stem>.bin little-endian float64 blob.
void write_dataset(const Dataset& dataset, const std::string& stem);
Dataset read_dataset(const std::string& stem);

}  // namespace hbf
