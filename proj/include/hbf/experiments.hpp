#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbf/baselines.hpp"
#include "hbf/channel.hpp"
#include "hbf/hgnn.hpp"

namespace hbf {

// One CSV result row. A sweep variable without a column of its own is
// appended to the experiment name as "[name=value]".
struct ExperimentRow {
  std::string experiment, method, structure;
  int K = 0, I_sum = 0, N_bar = 0;
  double snr_db = 0;
  std::uint64_t seed = 0;
  double mean_sum_se = 0;
  double wallclock_s = 0;
  double flops = 0;
  long long pilot_overhead = 0, backhaul_overhead = 0;

  // (experiment, method, structure, K, I_sum, N_bar, snr_db, seed)
  std::string key() const;
};

std::string csv_header();
std::string to_csv(const ExperimentRow& row);
void write_csv(const std::string& path, const std::vector<ExperimentRow>& rows);
std::vector<ExperimentRow> read_csv(const std::string& path);  // throws InputError

// Union of several tables; identical duplicates collapse, conflicting ones throw InputError.
std::vector<ExperimentRow> merge_rows(const std::vector<std::vector<ExperimentRow>>& tables);

// x/y series per figure analog, averaged over seeds.
struct SeriesPoint {
  std::string experiment, series, x;
  double y = 0;
  int count = 0;
};
std::vector<SeriesPoint> plot_series(const std::vector<ExperimentRow>& rows);
void write_series(const std::string& path, const std::vector<SeriesPoint>& points);

double snr_db(const Scenario& s);  // P_0 / sigma^2 in dB

// Datasets come from scenario.seed; model init and shuffling from training.seed,
// which also labels the rows.
struct ExperimentContext {
  Scenario scenario;
  HgnnConfig model;
  MlpConfig mlp;
  TrainOptions training;
  int train_samples = 2000;
  int test_samples = 200;
  int baseline_samples = 200;  // test samples given to the optimisation baselines

  Dataset train_set() const;
  Dataset test_set() const;
};

// Rows for the learned methods evaluated on `test`.
ExperimentRow hgnn_row(const std::string& experiment, const HgnnParams& params, const HgnnConfig& config,
                       const Dataset& test, std::uint64_t seed);
ExperimentRow mlp_row(const std::string& experiment, const MlpModel& model, const Dataset& test,
                      std::uint64_t seed);

// WMMSE digital, MO-AltMin and PC-AltMin (LS) over the first `count` test samples.
std::vector<ExperimentRow> baseline_rows(const std::string& experiment, const Dataset& test, int count,
                                         std::uint64_t seed);

// SNR sweep with sigma^2 varied at fixed P. WMMSE is warm-started from the
// next-lower SNR solution of the same sample.
struct SnrSweep {
  std::vector<ExperimentRow> rows;
  std::vector<std::vector<double>> wmmse_se;  // [snr index][sample]
  std::vector<std::vector<std::vector<Eigen::MatrixXcd>>> wmmse_precoders;  // [snr][sample][bs]
};
SnrSweep snr_sweep(const ExperimentContext& ctx, const HgnnParams* params, std::vector<double> snr_grid_db);

std::vector<ExperimentRow> ablation(const ExperimentContext& ctx);
std::vector<ExperimentRow> nbar_sweep(const ExperimentContext& ctx, const std::vector<int>& grid);
std::vector<ExperimentRow> phase_robustness(const ExperimentContext& ctx, const HgnnParams& params,
                                            const std::vector<double>& sigma_deg);
// Each entry of `shapes` is a per-BS UE count list; K is its length.
std::vector<ExperimentRow> scalability(const ExperimentContext& ctx, const HgnnParams& params,
                                       const std::vector<std::vector<int>>& shapes);
std::vector<ExperimentRow> timing(const ExperimentContext& ctx, const HgnnParams& params, const MlpModel* mlp);

}  // namespace hbf
