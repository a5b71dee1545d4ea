#include <algorithm>
#include <cmath>
#include <numeric>

#include "hbf/baselines.hpp"
#include "hbf/errors.hpp"
#include "hbf/eval.hpp"

namespace hbf {

using nn::Matrix;
using nn::Mode;

MlpShape MlpShape::of(const Scenario& s, Structure structure) {
  return {s.num_bs, s.ues_per_bs, s.mm_antennas, s.sub6_antennas, s.active_antennas, structure};
}

namespace {

int total(const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); }

int analog_width(const MlpShape& s, int I) {
  return s.structure == Structure::fully ? 2 * s.mm_antennas * I : 2 * s.mm_antennas;
}

}  // namespace

int MlpShape::input_width() const {
  const int U = total(ues_per_bs);
  return num_bs * (1 + 2) + U * (1 + 2 * sub6_antennas + 2) + num_bs * U * (2 * active_antennas + 2);
}

int MlpShape::output_width() const {
  int w = 0;
  for (int I : ues_per_bs) w += analog_width(*this, I) + 2 * I * I;
  return w;
}

MlpModel MlpModel::init(const MlpShape& shape, const MlpConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x6d6c70ULL}));
  std::vector<int> widths{shape.input_width()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(shape.output_width());
  MlpModel m;
  m.shape = shape;
  m.config = config;
  m.net = nn::DenseNet(widths, {config.dropout, true, false}, rng);
  return m;
}

Eigen::RowVectorXd mlp_input(const HeteroGraph& g, const MlpShape& s) {
  const int U = total(s.ues_per_bs);
  if (g.num_bs() != s.num_bs || g.num_ues() != U)
    throw DimensionError("MLP baseline was built for K=" + std::to_string(s.num_bs) + ", I_sum=" +
                         std::to_string(U) + " but the sample has K=" + std::to_string(g.num_bs()) +
                         ", I_sum=" + std::to_string(g.num_ues()));
  for (int k = 0, u = 0; k < s.num_bs; ++k)
    for (int i = 0; i < s.ues_per_bs[static_cast<std::size_t>(k)]; ++i, ++u)
      if (g.serving[static_cast<std::size_t>(u)] != k) throw DimensionError("MLP baseline: cell sizes differ");
  if (g.edge_width() != 2 * s.active_antennas ||
      static_cast<int>(g.ue_nodes.front().feature.size()) != 1 + 2 * s.sub6_antennas)
    throw DimensionError("MLP baseline: feature widths differ from the training scenario");
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(s.input_width()));
  for (const auto& b : g.bs_nodes) {
    x.insert(x.end(), b.feature.begin(), b.feature.end());
    x.insert(x.end(), {1.0, 0.0});
  }
  for (const auto& u : g.ue_nodes) {
    x.insert(x.end(), u.feature.begin(), u.feature.end());
    x.insert(x.end(), {0.0, 1.0});
  }
  for (const auto& e : g.edges) {
    x.insert(x.end(), e.feature.begin(), e.feature.end());
    if (e.kind == EdgeKind::desired)
      x.insert(x.end(), {1.0, 0.0});
    else
      x.insert(x.end(), {0.0, 1.0});
  }
  return Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

namespace {

Matrix inputs(const MlpShape& s, const std::vector<const HeteroGraph*>& graphs) {
  Matrix x(static_cast<Eigen::Index>(graphs.size()), s.input_width());
  for (std::size_t i = 0; i < graphs.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = mlp_input(*graphs[i], s);
  return x;
}

std::vector<PrecoderSolution> decode(const MlpShape& s, const Matrix& out, const std::vector<const HeteroGraph*>& graphs,
                                     MlpTape* tape) {
  const int M = s.mm_antennas;
  std::vector<PrecoderSolution> sols(graphs.size());
  if (tape) {
    tape->heads.assign(graphs.size(), {});
    tape->power.assign(graphs.size(), {});
  }
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const auto row = out.row(static_cast<Eigen::Index>(gi));
    Eigen::Index c = 0;
    for (int k = 0; k < s.num_bs; ++k) {
      const int I = s.ues_per_bs[static_cast<std::size_t>(k)];
      if (s.structure == Structure::partially && M % I != 0)
        throw DimensionError("partially-connected structure needs N_m divisible by I_k");
      Eigen::MatrixXcd araw = Eigen::MatrixXcd::Zero(M, I), braw(I, I);
      if (s.structure == Structure::fully) {
        for (int n = 0; n < I; ++n)
          for (int m = 0; m < M; ++m, c += 2) araw(m, n) = cd(row[c], row[c + 1]);
      } else {
        for (int m = 0; m < M; ++m, c += 2) araw(m, subarray_chain(m, M, I)) = cd(row[c], row[c + 1]);
      }
      for (int n = 0; n < I; ++n)
        for (int i = 0; i < I; ++i, c += 2) braw(n, i) = cd(row[c], row[c + 1]);
      const double P = graphs[gi]->bs_nodes[static_cast<std::size_t>(k)].feature.at(0);
      HeadRecord rec = assemble_heads(araw, braw, s.structure, P);
      sols[gi].analog.push_back(rec.analog);
      sols[gi].baseband.push_back(rec.power.baseband);
      if (tape) {
        tape->heads[gi].push_back(std::move(rec));
        tape->power[gi].push_back(P);
      }
    }
  }
  return sols;
}

}  // namespace

std::vector<PrecoderSolution> mlp_forward(MlpModel& model, const std::vector<const HeteroGraph*>& graphs, Mode mode,
                                          MlpTape* tape, Rng* rng) {
  const Matrix x = inputs(model.shape, graphs);
  const Matrix out = mode == Mode::train ? model.net.forward(x, mode, tape ? &tape->cache : nullptr, rng)
                                         : std::as_const(model.net).predict(x, tape ? &tape->cache : nullptr);
  return decode(model.shape, out, graphs, tape);
}

std::vector<PrecoderSolution> mlp_predict(const MlpModel& model, const std::vector<const HeteroGraph*>& graphs) {
  const Matrix out = model.net.predict(inputs(model.shape, graphs));
  return decode(model.shape, out, graphs, nullptr);
}

PrecoderSolution mlp_baseline(const MlpModel& model, const ChannelSample& sample, const Scenario& scenario) {
  const HeteroGraph g = build_graph(sample, scenario);
  return mlp_predict(model, {&g}).front();
}

void mlp_backward(const MlpModel& model, const MlpTape& tape,
                  const std::vector<std::vector<Eigen::MatrixXcd>>& dF, nn::DenseNet& grads) {
  const auto& s = model.shape;
  const int M = s.mm_antennas;
  Matrix d_out = Matrix::Zero(static_cast<Eigen::Index>(tape.heads.size()), s.output_width());
  for (std::size_t gi = 0; gi < tape.heads.size(); ++gi) {
    auto row = d_out.row(static_cast<Eigen::Index>(gi));
    Eigen::Index c = 0;
    for (int k = 0; k < s.num_bs; ++k) {
      const int I = s.ues_per_bs[static_cast<std::size_t>(k)];
      const auto& rec = tape.heads[gi][static_cast<std::size_t>(k)];
      Eigen::MatrixXcd ga, gb;
      assemble_heads_backward(rec, s.structure, tape.power[gi][static_cast<std::size_t>(k)],
                              dF[gi][static_cast<std::size_t>(k)], ga, gb);
      if (s.structure == Structure::fully) {
        for (int n = 0; n < I; ++n)
          for (int m = 0; m < M; ++m, c += 2) {
            row[c] = ga(m, n).real();
            row[c + 1] = ga(m, n).imag();
          }
      } else {
        for (int m = 0; m < M; ++m, c += 2) {
          const cd g = ga(m, subarray_chain(m, M, I));
          row[c] = g.real();
          row[c + 1] = g.imag();
        }
      }
      for (int n = 0; n < I; ++n)
        for (int i = 0; i < I; ++i, c += 2) {
          row[c] = gb(n, i).real();
          row[c + 1] = gb(n, i).imag();
        }
    }
  }
  model.net.backward(tape.cache, d_out, grads);
}

double mlp_mean_sum_se(const MlpModel& model, const Dataset& data) {
  const auto graphs = build_graphs(data);
  std::vector<const HeteroGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  const auto sols = mlp_predict(model, ptrs);
  double t = 0;
  for (std::size_t i = 0; i < sols.size(); ++i) t += sum_rate(sols[i], data.samples[i], data.scenario);
  return t / static_cast<double>(sols.size());
}

MlpTrainResult train_mlp(const Dataset& train_set, const Dataset& test_set, Structure structure,
                         const MlpConfig& config, const TrainOptions& o) {
  if (train_set.samples.empty()) throw InputError("training set is empty");
  if (o.batch_size < 1 || o.epochs < 0) throw ValidationError("batch size must be >= 1 and epochs >= 0");
  const auto& sc = train_set.scenario;
  MlpTrainResult res;
  res.model = MlpModel::init(MlpShape::of(sc, structure), config, o.seed);
  nn::DenseNet grads = nn::DenseNet::zeros_like(res.model.net);
  auto param_t = res.model.net.tensors();
  auto grad_t = grads.tensors();
  nn::AdamState adam;
  Rng rng(derive_seed(o.seed, {0x6d6c'7074ULL}));
  const auto graphs = build_graphs(train_set);
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  MlpTape tape;
  for (int epoch = 0; epoch < o.epochs; ++epoch) {
    const double lr = nn::scheduled_lr(o.adam, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double se_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(o.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(o.batch_size));
      std::vector<const HeteroGraph*> gp;
      std::vector<const ChannelSample*> sp;
      for (std::size_t i = start; i < end; ++i) {
        gp.push_back(&graphs[order[i]]);
        sp.push_back(&train_set.samples[order[i]]);
      }
      const auto sols = mlp_forward(res.model, gp, Mode::train, &tape, &rng);
      std::vector<std::vector<Eigen::MatrixXcd>> dF;
      const double l = loss(sols, sp, sc, &dF);
      if (!std::isfinite(l)) throw TrainingError("MLP loss became non-finite at epoch " + std::to_string(epoch));
      se_sum += -l * static_cast<double>(end - start);
      nn::zero(grad_t);
      mlp_backward(res.model, tape, dF, grads);
      nn::adam_step(param_t, grad_t, adam, o.adam, lr);
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_se = se_sum / static_cast<double>(order.size());
    st.test_se = mlp_mean_sum_se(res.model, test_set);
    res.curve.push_back(st);
    if (o.on_epoch) o.on_epoch(st);
  }
  return res;
}

}  // namespace hbf
