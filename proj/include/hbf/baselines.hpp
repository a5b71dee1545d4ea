#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hbf/channel.hpp"
#include "hbf/graph.hpp"
#include "hbf/hgnn.hpp"
#include "hbf/nn.hpp"
#include "hbf/precoder.hpp"

namespace hbf {

// Fully digital precoders, V[k] is N_m x I_k.
struct DigitalPrecoder {
  std::vector<Eigen::MatrixXcd> V;
  std::vector<double> trace;  // sum rate before the first and after every iteration
  int iterations = 0;
};

struct WmmseOptions {
  int max_iter = 100;
  double tol = 1e-8;        // stop when the sum-rate gain falls below this
  double bisection_tol = 1e-8;
  // Starting precoders; matched filters at equal power when empty.
  std::vector<Eigen::MatrixXcd> init;
};

// Multi-cell WMMSE on full mmWave CSI.
DigitalPrecoder wmmse(const ChannelSample& sample, const Scenario& scenario, const WmmseOptions& options = {});

struct AltMinReport {
  std::vector<double> trace;  // ||F_opt - F_RF F_BB||_F after each outer iteration
  int iterations = 0;
  bool converged = false;
};

struct AltMinOptions {
  int max_iter = 200;
  double tol = 1e-9;
  int restarts = 3;
  std::uint64_t seed = 1;
  int inner_iter = 20;  // conjugate-gradient steps per analog update
  // Unit-modulus starting point (entries of sqrt(N_m) F_RF); replaces the restarts.
  std::optional<Eigen::MatrixXcd> init;
};

struct AltMinResult {
  Eigen::MatrixXcd analog, baseband;
  AltMinReport report;
};

AltMinResult mo_altmin(const Eigen::MatrixXcd& f_opt, int rf_chains, double max_power,
                       const AltMinOptions& options = {});
AltMinResult pc_altmin(const Eigen::MatrixXcd& f_opt, int rf_chains, double max_power,
                       const AltMinOptions& options = {});

// Squared factorisation residual with the exact least-squares F_BB for a
// given analog matrix.
double ls_residual(const Eigen::MatrixXcd& f_opt, const Eigen::MatrixXcd& analog);

// WMMSE target factorised per BS by the chosen AltMin variant.
struct HybridBaseline {
  DigitalPrecoder digital;
  PrecoderSolution hybrid;
  std::vector<AltMinReport> reports;
};

// Per-BS factorisation of a digital target.
PrecoderSolution factorize(const DigitalPrecoder& digital, const Scenario& scenario, Structure structure,
                           const AltMinOptions& altmin = {}, std::vector<AltMinReport>* reports = nullptr);

HybridBaseline altmin_baseline(const ChannelSample& sample, const Scenario& scenario, Structure structure,
                               const AltMinOptions& altmin = {}, const WmmseOptions& wmmse_options = {});

std::string altmin_label(Structure structure);  // "MO-AltMin" | "PC-AltMin (LS)"

// Flat MLP over the concatenated graph features of a fixed-size scenario.
struct MlpShape {
  int num_bs = 0;
  std::vector<int> ues_per_bs;
  int mm_antennas = 0, sub6_antennas = 0, active_antennas = 0;
  Structure structure = Structure::fully;

  static MlpShape of(const Scenario& s, Structure structure);
  int input_width() const;
  int output_width() const;
  bool operator==(const MlpShape&) const = default;
};

struct MlpConfig {
  std::vector<int> hidden{200, 300, 500};
  double dropout = 0.3;
};

struct MlpModel {
  MlpShape shape;
  MlpConfig config;
  nn::DenseNet net;

  static MlpModel init(const MlpShape& shape, const MlpConfig& config, std::uint64_t seed);
};

// Node features with type one-hots, then edge features with kind one-hots.
// Throws DimensionError when the graph does not match the shape.
Eigen::RowVectorXd mlp_input(const HeteroGraph& graph, const MlpShape& shape);

struct MlpTape {
  nn::DenseCache cache;
  std::vector<std::vector<HeadRecord>> heads;  // [sample][bs]
  std::vector<std::vector<double>> power;
};

std::vector<PrecoderSolution> mlp_forward(MlpModel& model, const std::vector<const HeteroGraph*>& graphs,
                                          nn::Mode mode, MlpTape* tape = nullptr, Rng* rng = nullptr);
std::vector<PrecoderSolution> mlp_predict(const MlpModel& model, const std::vector<const HeteroGraph*>& graphs);
PrecoderSolution mlp_baseline(const MlpModel& model, const ChannelSample& sample, const Scenario& scenario);

void mlp_backward(const MlpModel& model, const MlpTape& tape,
                  const std::vector<std::vector<Eigen::MatrixXcd>>& grad_precoders, nn::DenseNet& grads);

struct MlpTrainResult {
  MlpModel model;
  std::vector<EpochStats> curve;
};

MlpTrainResult train_mlp(const Dataset& train_set, const Dataset& test_set, Structure structure,
                         const MlpConfig& config, const TrainOptions& options);
double mlp_mean_sum_se(const MlpModel& model, const Dataset& data);

}  // namespace hbf
