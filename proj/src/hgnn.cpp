#include "hbf/hgnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "hbf/errors.hpp"
#include "hbf/eval.hpp"
#include "hbf/tensor_io.hpp"

namespace hbf {

using nn::Matrix;
using nn::Mode;

std::vector<std::string> HgnnConfig::violations() const {
  std::vector<std::string> v;
  if (layers < 1) v.push_back("model.L must be >= 1");
  if (hidden < 1) v.push_back("model.D must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) v.push_back("model.dropout must lie in [0, 1)");
  auto positive = [&](const std::vector<int>& w, const char* name) {
    for (int x : w)
      if (x < 1) v.push_back(std::string("model.") + name + " widths must be >= 1");
  };
  positive(message_hidden, "message");
  positive(combine_hidden, "combine");
  positive(rf_hidden, "rf");
  positive(bb_hidden, "bb");
  return v;
}

namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

HgnnWidths hgnn_widths(const HgnnConfig& c, const HgnnDims& d) {
  const int D = c.hidden, E = 2 * d.active_antennas;
  HgnnWidths w;
  w.embed_bs = {1, D};
  w.embed_ue = {1 + 2 * d.sub6_antennas, D};
  w.message = chain(D + E, c.message_hidden, D);
  w.combine = chain(2 * D, c.combine_hidden, D);
  w.rf = chain(2 * D, c.rf_hidden, 2 * d.mm_antennas);
  w.bb = chain(3 * D + E, c.bb_hidden, 2);
  w.attention = 2 * D + E;
  return w;
}

HgnnParams HgnnParams::init(const HgnnConfig& c, const HgnnDims& d, std::uint64_t seed) {
  auto v = c.violations();
  if (!v.empty()) throw ValidationError("invalid model config: " + v.front());
  Rng rng(derive_seed(seed, {0x4867'6e6eULL}));
  const auto w = hgnn_widths(c, d);
  nn::DenseNetOptions mlp{c.dropout, true, false};
  nn::DenseNetOptions emb{0.0, true, true};
  HgnnParams p;
  p.dims = d;
  p.embed_bs = nn::DenseNet(w.embed_bs, emb, rng);
  p.embed_ue = nn::DenseNet(w.embed_ue, emb, rng);
  const double bound = std::sqrt(6.0 / (w.attention + 1.0));
  std::uniform_real_distribution<double> att(-bound, bound);
  for (int r = 0; r < kRelations; ++r) {
    p.message[r] = nn::DenseNet(w.message, mlp, rng);
    p.attention[r].resize(w.attention);
    for (auto& x : p.attention[r]) x = att(rng);
  }
  p.combine_bs = nn::DenseNet(w.combine, mlp, rng);
  p.combine_ue = nn::DenseNet(w.combine, mlp, rng);
  p.rf_head = nn::DenseNet(w.rf, mlp, rng);
  p.bb_head = nn::DenseNet(w.bb, mlp, rng);
  for (int l = 1; l < c.layers; ++l) {
    auto& bank = p.layer_stats.emplace_back();
    for (int r = 0; r < kRelations; ++r) bank[r] = p.message[r].stats();
    bank[kRelations] = p.combine_bs.stats();
    bank[kRelations + 1] = p.combine_ue.stats();
  }
  return p;
}

HgnnParams HgnnParams::zeros_like(const HgnnParams& o) {
  HgnnParams g;
  g.dims = o.dims;
  g.embed_bs = nn::DenseNet::zeros_like(o.embed_bs);
  g.embed_ue = nn::DenseNet::zeros_like(o.embed_ue);
  for (int r = 0; r < kRelations; ++r) {
    g.message[r] = nn::DenseNet::zeros_like(o.message[r]);
    g.attention[r] = nn::RowVector::Zero(o.attention[r].size());
  }
  g.combine_bs = nn::DenseNet::zeros_like(o.combine_bs);
  g.combine_ue = nn::DenseNet::zeros_like(o.combine_ue);
  g.rf_head = nn::DenseNet::zeros_like(o.rf_head);
  g.bb_head = nn::DenseNet::zeros_like(o.bb_head);
  return g;
}

namespace {

const char* const kMessageNames[kRelations] = {"message_bs_desired", "message_bs_interfering",
                                               "message_ue_desired", "message_ue_interfering"};

std::string tied_net_name(int n) {
  if (n < kRelations) return kMessageNames[n];
  return n == kRelations ? "combine_bs" : "combine_ue";
}

std::span<double> span_of(nn::RowVector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

template <class F>
void for_each_net(HgnnParams& p, F&& f) {
  f("embed_bs", p.embed_bs);
  f("embed_ue", p.embed_ue);
  for (int r = 0; r < kRelations; ++r) f(kMessageNames[r], p.message[r]);
  f("combine_bs", p.combine_bs);
  f("combine_ue", p.combine_ue);
  f("rf_head", p.rf_head);
  f("bb_head", p.bb_head);
}

}  // namespace

std::vector<std::span<double>> HgnnParams::tensors() {
  std::vector<std::span<double>> t;
  for_each_net(*this, [&](const char*, nn::DenseNet& net) {
    auto s = net.tensors();
    t.insert(t.end(), s.begin(), s.end());
  });
  for (auto& a : attention) t.emplace_back(a.data(), static_cast<std::size_t>(a.size()));
  return t;
}

std::vector<std::pair<std::string, std::span<double>>> HgnnParams::named_tensors() {
  std::vector<std::pair<std::string, std::span<double>>> t;
  for_each_net(*this, [&](const char* name, nn::DenseNet& net) {
    auto s = net.tensors();
    for (std::size_t i = 0; i < s.size(); ++i) t.emplace_back(std::string(name) + ".param" + std::to_string(i), s[i]);
    auto st = net.statistics();
    for (std::size_t i = 0; i < st.size(); ++i) t.emplace_back(std::string(name) + ".stat" + std::to_string(i), st[i]);
  });
  for (std::size_t l = 0; l < layer_stats.size(); ++l) {
    for (int n = 0; n < kTiedNets; ++n) {
      auto& bank = layer_stats[l][static_cast<std::size_t>(n)];
      const std::string name = tied_net_name(n) + ".layer" + std::to_string(l + 2) + ".stat";
      for (std::size_t i = 0; i < bank.mean.size(); ++i) {
        t.emplace_back(name + std::to_string(2 * i), span_of(bank.mean[i]));
        t.emplace_back(name + std::to_string(2 * i + 1), span_of(bank.var[i]));
      }
    }
  }
  for (int r = 0; r < kRelations; ++r)
    t.emplace_back("attention" + std::to_string(r),
                   std::span<double>(attention[r].data(), static_cast<std::size_t>(attention[r].size())));
  return t;
}

GraphBatch make_batch(std::span<const HeteroGraph* const> graphs) {
  GraphBatch b;
  b.num_graphs = static_cast<int>(graphs.size());
  int nb = 0, nu = 0;
  for (const auto* g : graphs) {
    nb += g->num_bs();
    nu += g->num_ues();
  }
  if (graphs.empty()) throw DimensionError("empty graph batch");
  const int ue_width = static_cast<int>(graphs.front()->ue_nodes.front().feature.size());
  b.edge_width = graphs.front()->edge_width();
  b.bs_raw.resize(nb, 1);
  b.ue_raw.resize(nu, ue_width);
  b.desired_edge.resize(nu, b.edge_width);
  b.served.assign(static_cast<std::size_t>(nb), {});
  std::array<std::vector<std::vector<double>>, kRelations> feats;
  int bo = 0, uo = 0;
  for (const auto* g : graphs) {
    if (static_cast<int>(g->ue_nodes.front().feature.size()) != ue_width || g->edge_width() != b.edge_width)
      throw DimensionError("graphs in one batch must share feature widths");
    b.bs_offset.push_back(bo);
    b.ue_offset.push_back(uo);
    for (int k = 0; k < g->num_bs(); ++k) {
      b.bs_raw(bo + k, 0) = g->bs_nodes[static_cast<std::size_t>(k)].feature.at(0);
      b.bs_power.push_back(g->bs_nodes[static_cast<std::size_t>(k)].feature.at(0));
    }
    for (int u = 0; u < g->num_ues(); ++u) {
      const auto& f = g->ue_nodes[static_cast<std::size_t>(u)].feature;
      b.ue_raw.row(uo + u) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
      const int s = g->serving[static_cast<std::size_t>(u)];
      b.served[static_cast<std::size_t>(bo + s)].push_back(uo + u);
      const auto& e = g->edge(s, u).feature;
      b.desired_edge.row(uo + u) = Eigen::Map<const Eigen::RowVectorXd>(e.data(), b.edge_width);
    }
    // BS receivers: for each BS, UEs ascending.
    for (int k = 0; k < g->num_bs(); ++k) {
      for (int u = 0; u < g->num_ues(); ++u) {
        const auto& e = g->edge(k, u);
        const int r = e.kind == EdgeKind::desired ? kBsDesired : kBsInterfering;
        b.relations[r].receiver.push_back(bo + k);
        b.relations[r].neighbor.push_back(uo + u);
        feats[r].push_back(e.feature);
      }
    }
    // UE receivers: for each UE, BSs ascending.
    for (int u = 0; u < g->num_ues(); ++u) {
      for (int k = 0; k < g->num_bs(); ++k) {
        const auto& e = g->edge(k, u);
        const int r = e.kind == EdgeKind::desired ? kUeDesired : kUeInterfering;
        b.relations[r].receiver.push_back(uo + u);
        b.relations[r].neighbor.push_back(bo + k);
        feats[r].push_back(e.feature);
      }
    }
    bo += g->num_bs();
    uo += g->num_ues();
  }
  b.bs_offset.push_back(bo);
  b.ue_offset.push_back(uo);
  // Chain order ranks the served UEs by input features only, so relabelling
  // UEs leaves every chain, and hence F_RF, where it was.
  b.chains = b.served;
  for (auto& ch : b.chains) {
    std::stable_sort(ch.begin(), ch.end(), [&](int x, int y) {
      const double ex = b.desired_edge.row(x).squaredNorm(), ey = b.desired_edge.row(y).squaredNorm();
      if (ex != ey) return ex > ey;
      return b.ue_raw.row(x).squaredNorm() > b.ue_raw.row(y).squaredNorm();
    });
  }
  for (int r = 0; r < kRelations; ++r) {
    auto& m = b.relations[r].feature;
    m.resize(static_cast<Eigen::Index>(feats[r].size()), b.edge_width);
    for (std::size_t i = 0; i < feats[r].size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Eigen::RowVectorXd>(feats[r][i].data(), b.edge_width);
  }
  return b;
}

GraphBatch make_batch(const std::vector<HeteroGraph>& graphs) {
  std::vector<const HeteroGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  return make_batch(ptrs);
}

namespace {

Matrix gather(const Matrix& src, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
  return out;
}

void scatter_add(Matrix& dst, const std::vector<int>& rows, const Matrix& src) {
  for (std::size_t i = 0; i < rows.size(); ++i) dst.row(rows[i]) += src.row(static_cast<Eigen::Index>(i));
}

Matrix hcat(std::initializer_list<const Matrix*> parts) {
  Eigen::Index rows = (*parts.begin())->rows(), cols = 0;
  for (const auto* p : parts) cols += p->cols();
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto* p : parts) {
    out.middleCols(c, p->cols()) = *p;
    c += p->cols();
  }
  return out;
}

// Train mode runs the net with batch statistics; eval mode never writes.
Matrix apply(nn::DenseNet& net, const Matrix& x, Mode mode, nn::DenseCache* cache, Rng* rng) {
  if (mode == Mode::train) return net.forward(x, mode, cache, rng);
  return std::as_const(net).predict(x, cache);
}

void check_dims(const HgnnParams& p, const GraphBatch& b) {
  if (b.edge_width != 2 * p.dims.active_antennas)
    throw DimensionError("edge feature width does not match the model's N_bar");
  if (b.ue_raw.cols() != 1 + 2 * p.dims.sub6_antennas)
    throw DimensionError("UE feature width does not match the model's N_s");
}

}  // namespace

NodeFeatures embed(HgnnParams& p, const GraphBatch& b, Mode mode, HgnnTape* tape) {
  check_dims(p, b);
  NodeFeatures v;
  v.bs = apply(p.embed_bs, b.bs_raw, mode, tape ? &tape->embed_bs : nullptr, nullptr);
  v.ue = apply(p.embed_ue, b.ue_raw, mode, tape ? &tape->embed_ue : nullptr, nullptr);
  return v;
}

Matrix aggregate(HgnnParams& p, const HgnnConfig& c, const GraphBatch& b, Relation rel, const Matrix& v_bs,
                 const Matrix& v_ue, Mode mode, HgnnTape::RelationTape* tape, Rng* rng) {
  const bool bs_receives = rel == kBsDesired || rel == kBsInterfering;
  const Matrix& recv = bs_receives ? v_bs : v_ue;
  const Matrix& nbr = bs_receives ? v_ue : v_bs;
  const auto& edges = b.relations[rel];
  const auto ne = static_cast<Eigen::Index>(edges.receiver.size());
  Matrix out = Matrix::Zero(recv.rows(), recv.cols());
  HgnnTape::RelationTape local;
  auto& t = tape ? *tape : local;
  if (ne == 0) {
    t.messages.resize(0, recv.cols());
    t.alpha.resize(0);
    return out;
  }
  const Matrix nbr_rows = gather(nbr, edges.neighbor);
  const Matrix msg_in = hcat({&nbr_rows, &edges.feature});
  t.messages = apply(p.message[rel], msg_in, mode, &t.message_cache, rng);
  t.alpha = Eigen::VectorXd::Ones(ne);
  if (c.attention) {
    const Matrix recv_rows = gather(recv, edges.receiver);
    t.scores_in = hcat({&recv_rows, &nbr_rows, &edges.feature});
    t.pre = t.scores_in * p.attention[rel].transpose();
    const Eigen::VectorXd s = t.pre.cwiseMax(0.0);
    // Softmax within each receiver's neighbourhood.
    Eigen::VectorXd mx = Eigen::VectorXd::Constant(recv.rows(), -std::numeric_limits<double>::infinity());
    for (Eigen::Index e = 0; e < ne; ++e) mx[edges.receiver[e]] = std::max(mx[edges.receiver[e]], s[e]);
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(recv.rows());
    for (Eigen::Index e = 0; e < ne; ++e) {
      t.alpha[e] = std::exp(s[e] - mx[edges.receiver[e]]);
      denom[edges.receiver[e]] += t.alpha[e];
    }
    for (Eigen::Index e = 0; e < ne; ++e) t.alpha[e] /= denom[edges.receiver[e]];
  }
  for (Eigen::Index e = 0; e < ne; ++e) out.row(edges.receiver[e]) += t.alpha[e] * t.messages.row(e);
  return out;
}

Matrix combine(nn::DenseNet& net, const Matrix& v, const Matrix& aggregated, bool residual, Mode mode,
               nn::DenseCache* cache, Rng* rng) {
  const Matrix in = hcat({&v, &aggregated});
  Matrix q = apply(net, in, mode, cache, rng);
  if (residual) q += v;
  return q;
}

namespace {

// Head input rows of one BS: one RF row per chain, one BB row per (chain, UE).
void head_inputs(const GraphBatch& b, const Matrix& v_bs, const Matrix& v_ue, Matrix& rf_in, Matrix& bb_in,
                 std::vector<int>& rf_row, std::vector<int>& bb_row) {
  const Eigen::Index D = v_bs.cols(), E = b.edge_width;
  Eigen::Index n_rf = 0, n_bb = 0;
  for (const auto& s : b.served) {
    n_rf += static_cast<Eigen::Index>(s.size());
    n_bb += static_cast<Eigen::Index>(s.size() * s.size());
  }
  rf_in.resize(n_rf, 2 * D);
  bb_in.resize(n_bb, 3 * D + E);
  rf_row.clear();
  bb_row.clear();
  Eigen::Index r = 0, q = 0;
  for (int k = 0; k < b.num_bs(); ++k) {
    rf_row.push_back(static_cast<int>(r));
    bb_row.push_back(static_cast<int>(q));
    const auto& served = b.served[static_cast<std::size_t>(k)];
    for (int chain_ue : b.chains[static_cast<std::size_t>(k)]) {
      rf_in.row(r).head(D) = v_bs.row(k);
      rf_in.row(r).tail(D) = v_ue.row(chain_ue);
      ++r;
      for (int ue : served) {
        bb_in.row(q).segment(0, D) = v_bs.row(k);
        bb_in.row(q).segment(D, D) = v_ue.row(chain_ue);
        bb_in.row(q).segment(2 * D, D) = v_ue.row(ue);
        bb_in.row(q).segment(3 * D, E) = b.desired_edge.row(ue);
        ++q;
      }
    }
  }
}

}  // namespace

namespace {

// Installs layer l's BatchNorm statistics in the tied nets for one round.
class LayerStatsScope {
 public:
  LayerStatsScope(HgnnParams& p, int l) : p_(p), bank_(l > 0 ? &p.layer_stats[static_cast<std::size_t>(l - 1)] : nullptr) {
    swap();
  }
  ~LayerStatsScope() { swap(); }
  LayerStatsScope(const LayerStatsScope&) = delete;
  LayerStatsScope& operator=(const LayerStatsScope&) = delete;

 private:
  void swap() {
    if (!bank_) return;
    for (int r = 0; r < kRelations; ++r) p_.message[r].swap_stats((*bank_)[static_cast<std::size_t>(r)]);
    p_.combine_bs.swap_stats((*bank_)[kRelations]);
    p_.combine_ue.swap_stats((*bank_)[kRelations + 1]);
  }
  HgnnParams& p_;
  std::array<nn::BatchNormStats, HgnnParams::kTiedNets>* bank_;
};

}  // namespace

std::vector<PrecoderSolution> forward(HgnnParams& p, const HgnnConfig& c, const GraphBatch& b, Mode mode,
                                      HgnnTape* tape, Rng* rng) {
  if (mode == Mode::train && c.dropout > 0 && !rng) throw StateError("train-mode forward needs an rng for dropout");
  if (tape) {
    *tape = HgnnTape{};
    tape->layers.resize(static_cast<std::size_t>(c.layers));
  }
  NodeFeatures v = embed(p, b, mode, tape);
  if (static_cast<std::size_t>(std::max(c.layers - 1, 0)) > p.layer_stats.size())
    throw StateError("parameters hold BatchNorm statistics for fewer layers than the config asks for");
  for (int l = 0; l < c.layers; ++l) {
    const LayerStatsScope scope(p, l);
    HgnnTape::LayerTape* lt = tape ? &tape->layers[static_cast<std::size_t>(l)] : nullptr;
    if (lt) {
      lt->v_bs = v.bs;
      lt->v_ue = v.ue;
    }
    std::array<Matrix, kRelations> a;
    for (int r = 0; r < kRelations; ++r)
      a[r] = aggregate(p, c, b, static_cast<Relation>(r), v.bs, v.ue, mode, lt ? &lt->rel[r] : nullptr, rng);
    // Both node types read layer l-1 features.
    Matrix next_bs = combine(p.combine_bs, v.bs, a[kBsDesired] + a[kBsInterfering], c.residual, mode,
                             lt ? &lt->combine_bs : nullptr, rng);
    Matrix next_ue = combine(p.combine_ue, v.ue, a[kUeDesired] + a[kUeInterfering], c.residual, mode,
                             lt ? &lt->combine_ue : nullptr, rng);
    v.bs = std::move(next_bs);
    v.ue = std::move(next_ue);
  }
  Matrix rf_in, bb_in;
  std::vector<int> rf_row, bb_row;
  head_inputs(b, v.bs, v.ue, rf_in, bb_in, rf_row, bb_row);
  const Matrix rf_out = apply(p.rf_head, rf_in, mode, tape ? &tape->rf_cache : nullptr, rng);
  const Matrix bb_out = apply(p.bb_head, bb_in, mode, tape ? &tape->bb_cache : nullptr, rng);
  if (rf_out.cols() != 2 * p.dims.mm_antennas) throw DimensionError("RF head width does not match N_m");

  std::vector<PrecoderSolution> sols(static_cast<std::size_t>(b.num_graphs));
  const int M = p.dims.mm_antennas;
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    auto& sol = sols[static_cast<std::size_t>(gi)];
    for (int k = b.bs_offset[static_cast<std::size_t>(gi)]; k < b.bs_offset[static_cast<std::size_t>(gi) + 1]; ++k) {
      const int I = static_cast<int>(b.served[static_cast<std::size_t>(k)].size());
      if (c.structure == Structure::partially && M % I != 0)
        throw DimensionError("partially-connected structure needs N_m divisible by I_k");
      Eigen::MatrixXcd analog_raw(M, I), bb_raw(I, I);
      for (int n = 0; n < I; ++n) {
        const auto row = rf_out.row(rf_row[static_cast<std::size_t>(k)] + n);
        for (int m = 0; m < M; ++m) analog_raw(m, n) = cd(row[2 * m], row[2 * m + 1]);
        for (int i = 0; i < I; ++i) {
          const auto q = bb_out.row(bb_row[static_cast<std::size_t>(k)] + n * I + i);
          bb_raw(n, i) = cd(q[0], q[1]);
        }
      }
      HeadRecord rec = assemble_heads(analog_raw, bb_raw, c.structure, b.bs_power[static_cast<std::size_t>(k)]);
      sol.analog.push_back(rec.analog);
      sol.baseband.push_back(rec.power.baseband);
      if (tape) tape->heads.push_back(std::move(rec));
    }
  }
  if (tape) {
    tape->v_bs = std::move(v.bs);
    tape->v_ue = std::move(v.ue);
    tape->rf_row = std::move(rf_row);
    tape->bb_row = std::move(bb_row);
    tape->recorded = true;
  }
  return sols;
}

std::vector<PrecoderSolution> predict(const HgnnParams& p, const HgnnConfig& c, const GraphBatch& b) {
  // Eval mode reads parameters only.
  return forward(const_cast<HgnnParams&>(p), c, b, Mode::eval, nullptr, nullptr);
}

void backward(const HgnnParams& p, const HgnnConfig& c, const GraphBatch& b, const HgnnTape& tape,
              const std::vector<std::vector<Eigen::MatrixXcd>>& grad_precoders, HgnnParams& g) {
  if (!tape.recorded) throw StateError("HGNN backward called without a recorded forward pass");
  const int M = p.dims.mm_antennas;
  const Eigen::Index D = c.hidden, E = b.edge_width;
  // Heads.
  Matrix d_rf = Matrix::Zero(tape.rf_cache.layers.back().pre.rows(), 2 * M);
  Matrix d_bb = Matrix::Zero(tape.bb_cache.layers.back().pre.rows(), 2);
  for (int gi = 0; gi < b.num_graphs; ++gi) {
    const int k0 = b.bs_offset[static_cast<std::size_t>(gi)];
    for (int k = k0; k < b.bs_offset[static_cast<std::size_t>(gi) + 1]; ++k) {
      const auto& rec = tape.heads[static_cast<std::size_t>(k)];
      const auto& gF = grad_precoders[static_cast<std::size_t>(gi)][static_cast<std::size_t>(k - k0)];
      Eigen::MatrixXcd g_analog_raw, g_bb_raw;
      assemble_heads_backward(rec, c.structure, b.bs_power[static_cast<std::size_t>(k)], gF, g_analog_raw, g_bb_raw);
      const int I = static_cast<int>(rec.analog_raw.cols());
      for (int n = 0; n < I; ++n) {
        auto row = d_rf.row(tape.rf_row[static_cast<std::size_t>(k)] + n);
        for (int m = 0; m < M; ++m) {
          row[2 * m] = g_analog_raw(m, n).real();
          row[2 * m + 1] = g_analog_raw(m, n).imag();
        }
        for (int i = 0; i < I; ++i) {
          auto q = d_bb.row(tape.bb_row[static_cast<std::size_t>(k)] + n * I + i);
          q[0] = g_bb_raw(n, i).real();
          q[1] = g_bb_raw(n, i).imag();
        }
      }
    }
  }
  Matrix d_bs = Matrix::Zero(b.num_bs(), D), d_ue = Matrix::Zero(b.num_ues(), D);
  const Matrix d_rf_in = p.rf_head.backward(tape.rf_cache, d_rf, g.rf_head);
  const Matrix d_bb_in = p.bb_head.backward(tape.bb_cache, d_bb, g.bb_head);
  {
    Eigen::Index r = 0, q = 0;
    for (int k = 0; k < b.num_bs(); ++k) {
      const auto& served = b.served[static_cast<std::size_t>(k)];
      for (int chain_ue : b.chains[static_cast<std::size_t>(k)]) {
        d_bs.row(k) += d_rf_in.row(r).head(D);
        d_ue.row(chain_ue) += d_rf_in.row(r).tail(D);
        ++r;
        for (int ue : served) {
          d_bs.row(k) += d_bb_in.row(q).segment(0, D);
          d_ue.row(chain_ue) += d_bb_in.row(q).segment(D, D);
          d_ue.row(ue) += d_bb_in.row(q).segment(2 * D, D);
          ++q;
        }
      }
    }
  }
  // Message-passing layers in reverse.
  for (int l = c.layers; l-- > 0;) {
    const auto& lt = tape.layers[static_cast<std::size_t>(l)];
    Matrix prev_bs = c.residual ? d_bs : Matrix::Zero(d_bs.rows(), D);
    Matrix prev_ue = c.residual ? d_ue : Matrix::Zero(d_ue.rows(), D);
    const Matrix din_bs = p.combine_bs.backward(lt.combine_bs, d_bs, g.combine_bs);
    const Matrix din_ue = p.combine_ue.backward(lt.combine_ue, d_ue, g.combine_ue);
    prev_bs += din_bs.leftCols(D);
    prev_ue += din_ue.leftCols(D);
    const Matrix d_agg_bs = din_bs.rightCols(D), d_agg_ue = din_ue.rightCols(D);
    for (int r = 0; r < kRelations; ++r) {
      const auto& rt = lt.rel[r];
      const auto& edges = b.relations[r];
      const auto ne = static_cast<Eigen::Index>(edges.receiver.size());
      if (ne == 0) continue;
      const bool bs_receives = r == kBsDesired || r == kBsInterfering;
      const Matrix& d_agg = bs_receives ? d_agg_bs : d_agg_ue;
      Matrix& d_recv = bs_receives ? prev_bs : prev_ue;
      Matrix& d_nbr = bs_receives ? prev_ue : prev_bs;
      const Matrix d_out_rows = gather(d_agg, edges.receiver);
      const Matrix d_msg = d_out_rows.array().colwise() * rt.alpha.array();
      if (c.attention) {
        const Eigen::VectorXd d_alpha = d_out_rows.cwiseProduct(rt.messages).rowwise().sum();
        Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d_agg.rows());
        for (Eigen::Index e = 0; e < ne; ++e) weighted[edges.receiver[e]] += rt.alpha[e] * d_alpha[e];
        Eigen::VectorXd d_pre(ne);
        for (Eigen::Index e = 0; e < ne; ++e) {
          const double ds = rt.alpha[e] * (d_alpha[e] - weighted[edges.receiver[e]]);
          d_pre[e] = rt.pre[e] > 0 ? ds : 0.0;
        }
        g.attention[r] += d_pre.transpose() * rt.scores_in;
        const Matrix d_scores = d_pre * p.attention[r];
        for (Eigen::Index e = 0; e < ne; ++e) {
          d_recv.row(edges.receiver[e]) += d_scores.row(e).segment(0, D);
          d_nbr.row(edges.neighbor[e]) += d_scores.row(e).segment(D, D);
        }
      }
      const Matrix d_msg_in = p.message[r].backward(rt.message_cache, d_msg, g.message[r]);
      scatter_add(d_nbr, edges.neighbor, Matrix(d_msg_in.leftCols(D)));
      (void)E;
    }
    d_bs = std::move(prev_bs);
    d_ue = std::move(prev_ue);
  }
  p.embed_bs.backward(tape.embed_bs, d_bs, g.embed_bs);
  p.embed_ue.backward(tape.embed_ue, d_ue, g.embed_ue);
}

double loss(const std::vector<PrecoderSolution>& sols, std::span<const ChannelSample* const> samples,
            const Scenario& sc, std::vector<std::vector<Eigen::MatrixXcd>>* grads) {
  if (sols.size() != samples.size()) throw DimensionError("one solution per sample required");
  const double n = static_cast<double>(sols.size());
  double total = 0;
  if (grads) grads->assign(sols.size(), {});
  for (std::size_t i = 0; i < sols.size(); ++i) {
    const auto f = precoders_of(sols[i]);
    std::vector<Eigen::MatrixXcd>* gi = grads ? &(*grads)[i] : nullptr;
    total += sum_rate_loss(f, *samples[i], sc, gi);
    if (gi)
      for (auto& m : *gi) m /= n;
  }
  return total / n;
}

std::vector<HeteroGraph> build_graphs(const Dataset& data) {
  std::vector<HeteroGraph> g;
  g.reserve(data.samples.size());
  for (const auto& s : data.samples) g.push_back(build_graph(s, data.scenario));
  return g;
}

std::vector<double> per_sample_sum_se(const HgnnParams& p, const HgnnConfig& c, const Dataset& data) {
  const auto graphs = build_graphs(data);
  std::vector<double> se;
  se.reserve(graphs.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t s = 0; s < graphs.size(); s += kChunk) {
    std::vector<const HeteroGraph*> ptrs;
    for (std::size_t i = s; i < std::min(graphs.size(), s + kChunk); ++i) ptrs.push_back(&graphs[i]);
    const auto sols = predict(p, c, make_batch(ptrs));
    for (std::size_t i = 0; i < sols.size(); ++i) se.push_back(sum_rate(sols[i], data.samples[s + i], data.scenario));
  }
  return se;
}

double mean_sum_se(const HgnnParams& p, const HgnnConfig& c, const Dataset& data) {
  const auto se = per_sample_sum_se(p, c, data);
  return std::accumulate(se.begin(), se.end(), 0.0) / static_cast<double>(se.size());
}

TrainResult train(const Dataset& train_set, const Dataset& test_set, const HgnnConfig& c, const TrainOptions& o) {
  if (train_set.samples.empty()) throw InputError("training set is empty");
  if (o.batch_size < 1 || o.epochs < 0) throw ValidationError("batch size must be >= 1 and epochs >= 0");
  const auto& sc = train_set.scenario;
  TrainResult res;
  res.params = HgnnParams::init(c, HgnnDims::of(sc), o.seed);
  HgnnParams grads = HgnnParams::zeros_like(res.params);
  auto param_t = res.params.tensors();
  auto grad_t = grads.tensors();
  nn::AdamState adam;
  Rng rng(derive_seed(o.seed, {0x7472'6169'6eULL}));
  const auto graphs = build_graphs(train_set);
  res.initial_test_se = mean_sum_se(res.params, c, test_set);
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  HgnnTape tape;
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
      const GraphBatch batch = make_batch(gp);
      const auto sols = forward(res.params, c, batch, Mode::train, &tape, &rng);
      std::vector<std::vector<Eigen::MatrixXcd>> dF;
      const double l = loss(sols, sp, sc, &dF);
      if (!std::isfinite(l))
        throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch starting " +
                            std::to_string(start));
      se_sum += -l * static_cast<double>(end - start);
      nn::zero(grad_t);
      backward(res.params, c, batch, tape, dF, grads);
      nn::adam_step(param_t, grad_t, adam, o.adam, lr);
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.train_se = se_sum / static_cast<double>(order.size());
    st.test_se = mean_sum_se(res.params, c, test_set);
    res.curve.push_back(st);
    if (o.on_epoch) o.on_epoch(st);
  }
  return res;
}

namespace {

nlohmann::json config_json(const HgnnConfig& c) {
  return {{"L", c.layers},
          {"D", c.hidden},
          {"message_hidden", c.message_hidden},
          {"combine_hidden", c.combine_hidden},
          {"rf_hidden", c.rf_hidden},
          {"bb_hidden", c.bb_hidden},
          {"dropout", c.dropout},
          {"attention", c.attention},
          {"residual", c.residual},
          {"structure", to_string(c.structure)}};
}

}  // namespace

void save_checkpoint(HgnnParams& p, const HgnnConfig& c, const std::string& stem) {
  TensorBlobWriter w;
  for (auto& [name, t] : p.named_tensors())
    w.add(name, {static_cast<std::int64_t>(t.size())}, false, t);
  nlohmann::json meta;
  meta["format"] = "hbf-checkpoint";
  meta["version"] = 1;
  meta["model"] = "hgnn";
  meta["config"] = config_json(c);
  meta["dims"] = {{"N_s", p.dims.sub6_antennas}, {"N_m", p.dims.mm_antennas}, {"N_bar", p.dims.active_antennas}};
  w.write(stem, meta);
}

std::pair<HgnnConfig, HgnnParams> load_checkpoint(const std::string& stem) {
  TensorBlobReader r(stem);
  const auto& m = r.manifest();
  if (m.value("format", "") != "hbf-checkpoint" || m.value("model", "") != "hgnn")
    throw InputError(stem + ".json is not an HGNN checkpoint");
  const auto& j = m.at("config");
  HgnnConfig c;
  c.layers = j.at("L");
  c.hidden = j.at("D");
  c.message_hidden = j.at("message_hidden").get<std::vector<int>>();
  c.combine_hidden = j.at("combine_hidden").get<std::vector<int>>();
  c.rf_hidden = j.at("rf_hidden").get<std::vector<int>>();
  c.bb_hidden = j.at("bb_hidden").get<std::vector<int>>();
  c.dropout = j.at("dropout");
  c.attention = j.at("attention");
  c.residual = j.at("residual");
  c.structure = parse_structure(j.at("structure"));
  const auto& d = m.at("dims");
  HgnnDims dims{d.at("N_s"), d.at("N_m"), d.at("N_bar")};
  HgnnParams p = HgnnParams::init(c, dims, 0);
  for (auto& [name, t] : p.named_tensors()) {
    const auto v = r.values(name);
    if (v.size() != t.size()) throw DimensionError("checkpoint tensor '" + name + "' has the wrong size");
    std::copy(v.begin(), v.end(), t.begin());
  }
  return {c, std::move(p)};
}

}  // namespace hbf
