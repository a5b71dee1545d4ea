#include "hbf/eval.hpp"

#include <cmath>
#include <numbers>

#include "hbf/errors.hpp"
#include "hbf/hgnn.hpp"

namespace hbf {

std::vector<Eigen::MatrixXcd> precoders_of(const PrecoderSolution& sol) {
  std::vector<Eigen::MatrixXcd> f;
  f.reserve(sol.analog.size());
  for (int k = 0; k < sol.num_bs(); ++k) f.push_back(sol.precoder(k));
  return f;
}

namespace {

void check_shapes(const std::vector<Eigen::MatrixXcd>& f, const ChannelSample& s, const Scenario& sc) {
  if (static_cast<int>(f.size()) != sc.num_bs || s.num_bs != sc.num_bs || s.num_ues() != sc.total_ues())
    throw DimensionError("precoders/channels do not match the scenario");
  for (int k = 0; k < sc.num_bs; ++k)
    if (f[static_cast<std::size_t>(k)].cols() != sc.ues_per_bs[static_cast<std::size_t>(k)] ||
        f[static_cast<std::size_t>(k)].rows() != s.full(0, k).size())
      throw DimensionError("precoder of BS " + std::to_string(k) + " has the wrong shape");
}

// gains(u, col) = |h_{u,m}^H f_m[l]|^2 with col enumerating (m, l) in UE order.
Eigen::MatrixXd link_gains(const std::vector<Eigen::MatrixXcd>& f, const ChannelSample& s, const Scenario& sc,
                           Eigen::MatrixXcd* inner) {
  const int U = sc.total_ues();
  Eigen::MatrixXd g(U, U);
  if (inner) inner->resize(U, U);
  for (int u = 0; u < U; ++u) {
    int col = 0;
    for (int m = 0; m < sc.num_bs; ++m) {
      Eigen::RowVectorXcd hf = s.full(u, m).adjoint() * f[static_cast<std::size_t>(m)];
      for (Eigen::Index l = 0; l < hf.size(); ++l, ++col) {
        g(u, col) = std::norm(hf[l]);
        if (inner) (*inner)(u, col) = hf[l];
      }
    }
  }
  return g;
}

}  // namespace

std::vector<double> rate_per_ue(const std::vector<Eigen::MatrixXcd>& f, const ChannelSample& s,
                                const Scenario& sc) {
  check_shapes(f, s, sc);
  const Eigen::MatrixXd g = link_gains(f, s, sc, nullptr);
  std::vector<double> r(static_cast<std::size_t>(g.rows()));
  for (Eigen::Index u = 0; u < g.rows(); ++u) {
    const double signal = g(u, u);
    const double noise_plus_interf = g.row(u).sum() - signal + sc.noise_power;
    r[static_cast<std::size_t>(u)] = std::log2(1.0 + signal / noise_plus_interf);
  }
  return r;
}

std::vector<double> rate_per_ue(const PrecoderSolution& sol, const ChannelSample& s, const Scenario& sc) {
  return rate_per_ue(precoders_of(sol), s, sc);
}

double sum_rate(const std::vector<Eigen::MatrixXcd>& f, const ChannelSample& s, const Scenario& sc) {
  double t = 0;
  for (double r : rate_per_ue(f, s, sc)) t += r;
  return t;
}

double sum_rate(const PrecoderSolution& sol, const ChannelSample& s, const Scenario& sc) {
  return sum_rate(precoders_of(sol), s, sc);
}

double sum_rate_loss(const std::vector<Eigen::MatrixXcd>& f, const ChannelSample& s, const Scenario& sc,
                     std::vector<Eigen::MatrixXcd>* grads) {
  check_shapes(f, s, sc);
  Eigen::MatrixXcd inner;
  const Eigen::MatrixXd g = link_gains(f, s, sc, &inner);
  const int U = static_cast<int>(g.rows());
  const double inv_ln2 = 1.0 / std::numbers::ln2;
  double loss = 0;
  if (grads) {
    grads->clear();
    for (const auto& fk : f) grads->push_back(Eigen::MatrixXcd::Zero(fk.rows(), fk.cols()));
  }
  for (int u = 0; u < U; ++u) {
    const double total = g.row(u).sum() + sc.noise_power;
    const double rest = total - g(u, u);
    loss -= std::log2(total / rest);
    if (!grads) continue;
    // dLoss/d|g_{u,col}|^2
    const double c_all = -inv_ln2 / total;
    const double c_interf = inv_ln2 / rest;
    int col = 0;
    for (int m = 0; m < sc.num_bs; ++m) {
      const auto& h = s.full(u, m);
      auto& gm = (*grads)[static_cast<std::size_t>(m)];
      for (Eigen::Index l = 0; l < gm.cols(); ++l, ++col) {
        const double c = c_all + (col == u ? 0.0 : c_interf);
        gm.col(l) += (2.0 * c * inner(u, col)) * h;
      }
    }
  }
  return loss;
}

double mlp_flops(const std::vector<int>& widths) {
  double f = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    f += 2.0 * widths[i] * widths[i + 1] + 4.0 * widths[i];
  return f;
}

FlopBreakdown flops_estimate(const HgnnConfig& cfg, const Scenario& sc) {
  const HgnnDims dims{sc.sub6_antennas, sc.mm_antennas, sc.active_antennas};
  const auto w = hgnn_widths(cfg, dims);
  const double D = cfg.hidden, E = 2.0 * sc.active_antennas;
  const double att = cfg.attention ? 2.0 * (2.0 * D + E) + 2.0 * D : D;
  FlopBreakdown b;
  for (int p = 0; p < 4; ++p) {
    b.message[p] = mlp_flops(w.message);
    b.attention[p] = att;
  }
  b.combine_bs = b.combine_ue = mlp_flops(w.combine);
  const int U = sc.total_ues(), K = sc.num_bs;
  const double rf_call = mlp_flops(w.rf), bb_call = mlp_flops(w.bb);
  double layer = 0, heads = 0;
  for (int k = 0; k < K; ++k) {
    const double Ik = sc.ues_per_bs[static_cast<std::size_t>(k)];
    layer += Ik * (b.message[0] + b.attention[0]) + (U - Ik) * (b.message[1] + b.attention[1]) + b.combine_bs;
    // C_RF of BS k covers its I_k chains; C_BB of each served UE covers I_k entries.
    heads += Ik * rf_call + Ik * (Ik * bb_call);
  }
  layer += U * ((b.message[2] + b.attention[2]) + (K - 1) * (b.message[3] + b.attention[3]) + b.combine_ue);
  const double I0 = sc.ues_per_bs.front();
  b.rf_per_bs = I0 * rf_call;
  b.bb_per_ue = I0 * bb_call;
  b.total = cfg.layers * layer + heads;
  return b;
}

OverheadMethod parse_overhead_method(const std::string& name) {
  if (name == "HGNN" || name == "hgnn") return OverheadMethod::hgnn;
  if (name == "MLP" || name == "mlp") return OverheadMethod::mlp;
  if (name == "AltMin" || name == "altmin") return OverheadMethod::altmin;
  throw InputError("unknown overhead method '" + name + "' (expected HGNN|MLP|AltMin)");
}

Overhead overhead_report(const Scenario& sc, OverheadMethod method, Structure structure) {
  const long long K = sc.num_bs, U = sc.total_ues();
  const long long csi = method == OverheadMethod::altmin ? sc.mm_antennas : sc.active_antennas;
  Overhead o;
  o.pilots = K * U * csi;
  if (method == OverheadMethod::mlp) return o;
  long long matrices = 0;
  for (int Ik : sc.ues_per_bs) {
    const long long I = Ik;
    matrices += (structure == Structure::fully ? sc.mm_antennas * I : sc.mm_antennas) + I * I;
  }
  o.backhaul = K * U * csi + matrices;
  return o;
}

Overhead overhead_report(const Scenario& sc, const std::string& method, Structure structure) {
  return overhead_report(sc, parse_overhead_method(method), structure);
}

}  // namespace hbf
