#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hbf/channel.hpp"
#include "hbf/graph.hpp"
#include "hbf/nn.hpp"
#include "hbf/precoder.hpp"

namespace hbf {

// Hyper-parameters of the heterogeneous GNN. Hidden widths exclude the
// input and output widths, which follow from `hidden` and the scenario.
struct HgnnConfig {
  int layers = 2;   // L
  int hidden = 64;  // D
  std::vector<int> message_hidden{96};
  std::vector<int> combine_hidden{96};
  std::vector<int> rf_hidden{96};
  std::vector<int> bb_hidden{50};
  double dropout = 0.3;
  bool attention = true;
  bool residual = true;
  Structure structure = Structure::fully;

  std::vector<std::string> violations() const;
};

// Scenario dimensions the parameter shapes depend on. K and I_k are free.
struct HgnnDims {
  int sub6_antennas = 8;
  int mm_antennas = 16;
  int active_antennas = 4;

  static HgnnDims of(const Scenario& s) { return {s.sub6_antennas, s.mm_antennas, s.active_antennas}; }
  bool operator==(const HgnnDims&) const = default;
};

struct HgnnWidths {
  std::vector<int> embed_bs, embed_ue, message, combine, rf, bb;
  int attention = 0;
};

HgnnWidths hgnn_widths(const HgnnConfig& config, const HgnnDims& dims);

// Message relations by receiving node: BS nodes aggregate over UE
// neighbours, UE nodes over BS neighbours, each split by edge kind.
enum Relation : int { kBsDesired = 0, kBsInterfering = 1, kUeDesired = 2, kUeInterfering = 3 };
inline constexpr int kRelations = 4;

// All trainable tensors. Message/attention/combination weights are tied
// across nodes, edges and layers; a zero-initialised copy holds gradients.
struct HgnnParams {
  HgnnDims dims;
  nn::DenseNet embed_bs, embed_ue;
  std::array<nn::DenseNet, kRelations> message;
  std::array<nn::RowVector, kRelations> attention;  // width 2D + 2 N_bar
  nn::DenseNet combine_bs, combine_ue;
  nn::DenseNet rf_head;  // [v_k || v_chain] -> 2 N_m, v_chain = features of the chain's paired UE
  nn::DenseNet bb_head;  // [v_k || v_chain || v_ue || e_ue,k] -> 2

  // The message and combination nets are reused by every layer, but each
  // layer sees a different input distribution, so BatchNorm keeps running
  // statistics per layer: the nets' own serve layer 1, entry l-2 layer l.
  // Order: the four message nets, then combine_bs, combine_ue.
  static constexpr int kTiedNets = kRelations + 2;
  std::vector<std::array<nn::BatchNormStats, kTiedNets>> layer_stats;

  static HgnnParams init(const HgnnConfig& config, const HgnnDims& dims, std::uint64_t seed);
  static HgnnParams zeros_like(const HgnnParams& other);

  std::vector<std::span<double>> tensors();
  // Trainable tensors and BatchNorm statistics by name, for checkpoints.
  std::vector<std::pair<std::string, std::span<double>>> named_tensors();
};

// Disjoint union of several graphs laid out as row-stacked matrices.
struct GraphBatch {
  struct Edges {
    std::vector<int> receiver, neighbor;
    nn::Matrix feature;
  };
  int num_graphs = 0;
  nn::Matrix bs_raw, ue_raw;
  std::vector<double> bs_power;
  std::vector<int> bs_offset, ue_offset;  // per graph, plus end sentinel
  std::vector<std::vector<int>> served;   // global BS -> global UEs it serves
  // global BS -> the UE paired with each RF chain: served UEs by decreasing
  // desired-link partial-CSI power, then sub-6 feature norm
  std::vector<std::vector<int>> chains;
  std::array<Edges, kRelations> relations;
  nn::Matrix desired_edge;                // row per UE: edge to its serving BS
  int edge_width = 0;

  int num_bs() const { return static_cast<int>(bs_raw.rows()); }
  int num_ues() const { return static_cast<int>(ue_raw.rows()); }
};

GraphBatch make_batch(std::span<const HeteroGraph* const> graphs);
GraphBatch make_batch(const std::vector<HeteroGraph>& graphs);

// Intermediate values of one forward pass, consumed by backward().
struct HgnnTape {
  struct RelationTape {
    nn::DenseCache message_cache;
    nn::Matrix messages;
    nn::Matrix scores_in;       // [v_i || v_j || e_ij] rows
    Eigen::VectorXd pre, alpha;
  };
  struct LayerTape {
    nn::Matrix v_bs, v_ue;  // layer inputs
    std::array<RelationTape, kRelations> rel;
    nn::DenseCache combine_bs, combine_ue;
  };
  nn::DenseCache embed_bs, embed_ue;
  std::vector<LayerTape> layers;
  nn::Matrix v_bs, v_ue;  // final features
  nn::DenseCache rf_cache, bb_cache;
  std::vector<HeadRecord> heads;  // per global BS
  std::vector<int> rf_row, bb_row;  // first head row of each BS
  bool recorded = false;
};

// Node features after `layers` rounds; exposed for tests.
struct NodeFeatures {
  nn::Matrix bs, ue;
};

NodeFeatures embed(HgnnParams& params, const GraphBatch& batch, nn::Mode mode, HgnnTape* tape);

// One relation's aggregate a_{i,t,w} for every receiving node.
nn::Matrix aggregate(HgnnParams& params, const HgnnConfig& config, const GraphBatch& batch, Relation rel,
                     const nn::Matrix& v_bs, const nn::Matrix& v_ue, nn::Mode mode,
                     HgnnTape::RelationTape* tape, Rng* rng);

// v^l from v^{l-1} and the summed aggregates of one node type.
nn::Matrix combine(nn::DenseNet& net, const nn::Matrix& v, const nn::Matrix& aggregated, bool residual,
                   nn::Mode mode, nn::DenseCache* cache, Rng* rng);

// One PrecoderSolution per graph in the batch.
std::vector<PrecoderSolution> forward(HgnnParams& params, const HgnnConfig& config, const GraphBatch& batch,
                                      nn::Mode mode, HgnnTape* tape = nullptr, Rng* rng = nullptr);

// Eval-mode forward; does not touch running statistics.
std::vector<PrecoderSolution> predict(const HgnnParams& params, const HgnnConfig& config,
                                      const GraphBatch& batch);

// Backpropagates dLoss/dF_k (grad_precoders[graph][bs]) into `grads`.
void backward(const HgnnParams& params, const HgnnConfig& config, const GraphBatch& batch, const HgnnTape& tape,
              const std::vector<std::vector<Eigen::MatrixXcd>>& grad_precoders, HgnnParams& grads);

// Mean over samples of -(sum rate), evaluated on full CSI. When `grads` is
// given the gradient w.r.t. each precoder is written there.
double loss(const std::vector<PrecoderSolution>& solutions, std::span<const ChannelSample* const> samples,
            const Scenario& scenario, std::vector<std::vector<Eigen::MatrixXcd>>* grads);

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_se = 0;  // mean sum-SE over training minibatches (train mode)
  double test_se = 0;   // mean sum-SE on the test set (eval mode)
};

struct TrainOptions {
  int epochs = 30;
  int batch_size = 10;
  nn::AdamOptions adam;
  std::uint64_t seed = 1;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  HgnnParams params;
  std::vector<EpochStats> curve;
  double initial_test_se = 0;
};

TrainResult train(const Dataset& train_set, const Dataset& test_set, const HgnnConfig& config,
                  const TrainOptions& options);

// Mean sum-SE over a dataset in eval mode.
double mean_sum_se(const HgnnParams& params, const HgnnConfig& config, const Dataset& data);
std::vector<double> per_sample_sum_se(const HgnnParams& params, const HgnnConfig& config, const Dataset& data);

std::vector<HeteroGraph> build_graphs(const Dataset& data);

void save_checkpoint(HgnnParams& params, const HgnnConfig& config, const std::string& stem);
std::pair<HgnnConfig, HgnnParams> load_checkpoint(const std::string& stem);

}  // namespace hbf
