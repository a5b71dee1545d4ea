#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hbf/baselines.hpp"
#include "hbf/channel.hpp"
#include "hbf/experiments.hpp"
#include "hbf/hgnn.hpp"

namespace hbf {

// Everything one command needs. Text form is INI:
//
//   [scenario]  K I N_m N_s N_bar N_c P sigma2 B_mm B_sub seed structure
//   [model]     L D message_hidden combine_hidden rf_hidden bb_hidden dropout attention residual
//   [mlp]       hidden dropout
//   [training]  epochs batch_size lr lr_decay decay_every seed train_samples test_samples
//   [experiment] kind snr_db nbar phase_deg scales baseline_samples structures
//   [io]        dataset checkpoint results
//
// Lists are comma separated; I and P accept one value for every BS.
// scales lists KxI shapes such as "3x2, 2x4".
struct RunConfig {
  Scenario scenario;
  HgnnConfig model;
  MlpConfig mlp;
  int epochs = 30;
  int batch_size = 10;
  nn::AdamOptions adam;
  std::uint64_t seed = 1;
  int train_samples = 2000;
  int test_samples = 200;

  struct Experiment {
    std::string kind = "snr_sweep";
    std::vector<double> snr_db{0, 5, 10, 15, 20};
    std::vector<int> nbar{0, 2, 4, 8};
    std::vector<double> phase_deg{0, 5, 10, 15};
    std::vector<std::vector<int>> scales{{2, 2, 2}, {4, 4}};
    int baseline_samples = 50;
    std::vector<Structure> structures{Structure::fully, Structure::partially};
  } experiment;

  struct Io {
    std::string dataset, checkpoint, results;
  } io;

  std::vector<std::string> violations() const;

  // Sorted INI text that parses back to the same config; the basis of the hash.
  std::string canonical() const;
  std::uint64_t hash() const;          // FNV-1a of canonical() minus the experiment block
  std::string run_name() const;        // <16 hex digits>-s<seed>

  ExperimentContext context() const;
  TrainOptions train_options() const;
};

inline const std::vector<std::string> kExperimentKinds{"snr_sweep", "ablation",    "nbar_sweep",
                                                       "phase_robustness", "scalability", "timing"};

// Parses INI text, applies "section.key=value" overrides and validates.
// Throws ValidationError naming every problem found.
RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

}  // namespace hbf
