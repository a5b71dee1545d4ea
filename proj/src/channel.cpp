#include "hbf/channel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hbf/errors.hpp"
#include "hbf/tensor_io.hpp"

namespace hbf {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kMaxDelay = 100e-9;
constexpr double kWeakPathPower = 0.1;
}  // namespace

std::string to_string(Structure s) { return s == Structure::fully ? "fully" : "partially"; }

Structure parse_structure(const std::string& s) {
  if (s == "fully") return Structure::fully;
  if (s == "partially") return Structure::partially;
  throw InputError("unknown structure '" + s + "' (expected fully|partially)");
}

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

int Scenario::total_ues() const {
  int n = 0;
  for (int i : ues_per_bs) n += i;
  return n;
}

int Scenario::serving_bs(int ue) const {
  for (int k = 0; k < num_bs; ++k) {
    if (ue < ues_per_bs[k]) return k;
    ue -= ues_per_bs[k];
  }
  throw LookupError("UE index out of range");
}

int Scenario::ue_index(int bs, int local) const {
  int base = 0;
  for (int k = 0; k < bs; ++k) base += ues_per_bs.at(k);
  return base + local;
}

int Scenario::local_index(int ue) const { return ue - ue_index(serving_bs(ue), 0); }

std::vector<std::string> Scenario::violations() const {
  std::vector<std::string> v;
  if (num_bs < 1) v.push_back("scenario.K must be >= 1");
  if (static_cast<int>(ues_per_bs.size()) != num_bs)
    v.push_back("scenario.I must list one UE count per BS");
  if (static_cast<int>(max_power.size()) != num_bs)
    v.push_back("scenario.P must list one power per BS");
  for (int i : ues_per_bs)
    if (i < 1) v.push_back("scenario.I entries must be >= 1");
  for (double p : max_power)
    if (!(p > 0)) v.push_back("scenario.P entries must be > 0");
  if (mm_antennas < 1) v.push_back("scenario.N_m must be >= 1");
  if (sub6_antennas < 1) v.push_back("scenario.N_s must be >= 1");
  if (active_antennas < 0 || active_antennas > mm_antennas)
    v.push_back("scenario.N_bar must satisfy 0 <= N_bar <= N_m");
  if (num_paths < 1) v.push_back("scenario.N_c must be >= 1");
  if (!(noise_power > 0)) v.push_back("scenario.sigma2 must be > 0");
  if (!(mm_bandwidth >= 0) || !(sub6_bandwidth >= 0)) v.push_back("bandwidths must be >= 0");
  for (int i : ues_per_bs) {
    if (i > mm_antennas) v.push_back("scenario.I_k must not exceed N_m (RF chains <= antennas)");
    if (structure == Structure::partially && i > 0 && mm_antennas % i != 0)
      v.push_back("partially-connected structure needs N_m divisible by every I_k");
  }
  return v;
}

void Scenario::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::ostringstream os;
  os << "invalid scenario:";
  for (const auto& s : v) os << "\n  - " << s;
  throw ValidationError(os.str());
}

Eigen::VectorXcd array_response(double aod, int antennas) {
  Eigen::VectorXcd a(antennas);
  const double step = kPi * std::sin(aod);
  const double scale = 1.0 / std::sqrt(static_cast<double>(antennas));
  for (int n = 0; n < antennas; ++n) a[n] = std::polar(scale, step * n);
  return a;
}

PathSet gen_paths(const Scenario& scenario, Rng& rng) {
  std::uniform_real_distribution<double> aod(-kPi / 2, kPi / 2);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi);
  std::uniform_real_distribution<double> delay(0.0, kMaxDelay);
  std::normal_distribution<double> gauss(0.0, std::sqrt(kWeakPathPower / 2));
  PathSet p;
  const auto n = static_cast<std::size_t>(scenario.num_paths);
  p.aods.reserve(n);
  for (std::size_t l = 0; l < n; ++l) {
    double a = aod(rng);
    while (a <= -kPi / 2) a = aod(rng);  // open interval
    p.aods.push_back(a);
    p.phases.push_back(phase(rng));
    p.delays.push_back(delay(rng));
    if (l == 0) {
      p.gains.push_back(1.0);
    } else {
      double re = gauss(rng), im = gauss(rng);
      p.gains.push_back(std::hypot(re, im));
    }
  }
  return p;
}

Eigen::VectorXcd synth_channel(const PathSet& paths, int antennas, double bandwidth) {
  Eigen::VectorXcd h = Eigen::VectorXcd::Zero(antennas);
  const double scale = std::sqrt(static_cast<double>(antennas) / static_cast<double>(paths.size()));
  for (std::size_t l = 0; l < paths.size(); ++l) {
    cd coeff = std::polar(paths.gains[l], paths.phases[l] + 2 * kPi * paths.delays[l] * bandwidth);
    h += coeff * array_response(paths.aods[l], antennas);
  }
  return scale * h;
}

Eigen::VectorXcd extract_partial(const Eigen::VectorXcd& full, const std::vector<int>& active_idx) {
  Eigen::VectorXcd out(static_cast<Eigen::Index>(active_idx.size()));
  for (std::size_t j = 0; j < active_idx.size(); ++j) {
    int i = active_idx[j];
    if (i < 0 || i >= full.size())
      throw DimensionError("active antenna index " + std::to_string(i) + " out of range");
    out[static_cast<Eigen::Index>(j)] = full[i];
  }
  return out;
}

Eigen::VectorXcd apply_phase_error(const Eigen::VectorXcd& h, double sigma_deg, Rng& rng) {
  if (sigma_deg == 0) return h;
  std::normal_distribution<double> theta(0.0, sigma_deg * kPi / 180.0);
  return h * std::polar(1.0, theta(rng));
}

ChannelSample with_phase_error(const ChannelSample& sample, double sigma_deg, Rng& rng) {
  ChannelSample out = sample;
  for (auto& e : out.mm_partial) e = apply_phase_error(e, sigma_deg, rng);
  return out;
}

std::vector<int> uniform_active_indices(int mm_antennas, int active_antennas) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(active_antennas));
  for (int t = 0; t < active_antennas; ++t)
    idx.push_back(static_cast<int>((static_cast<long long>(t) * mm_antennas) / active_antennas));
  return idx;
}

ChannelSample gen_sample(const Scenario& scenario, std::uint64_t sample_seed) {
  const int K = scenario.num_bs, U = scenario.total_ues();
  ChannelSample s;
  s.num_bs = K;
  s.sub6.resize(U, scenario.sub6_antennas);
  s.mm_full.resize(static_cast<std::size_t>(U * K));
  s.mm_partial.resize(s.mm_full.size());
  s.active_idx = uniform_active_indices(scenario.mm_antennas, scenario.active_antennas);
  for (int u = 0; u < U; ++u) {
    const int serving = scenario.serving_bs(u);
    for (int k = 0; k < K; ++k) {
      Rng rng(derive_seed(sample_seed, {static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(k)}));
      PathSet paths = gen_paths(scenario, rng);
      auto& h = s.mm_full[static_cast<std::size_t>(u * K + k)];
      h = synth_channel(paths, scenario.mm_antennas, scenario.mm_bandwidth);
      s.mm_partial[static_cast<std::size_t>(u * K + k)] = extract_partial(h, s.active_idx);
      // The sub-6GHz link shares the geometry of the serving mmWave link.
      if (k == serving)
        s.sub6.row(u) = synth_channel(paths, scenario.sub6_antennas, scenario.sub6_bandwidth).transpose();
    }
  }
  return s;
}

Dataset gen_dataset(const Scenario& scenario, int count, std::uint64_t seed, Split split) {
  scenario.validate();
  if (count < 1) throw ValidationError("dataset size must be >= 1");
  Dataset d;
  d.scenario = scenario;
  d.split = split;
  d.samples.reserve(static_cast<std::size_t>(count));
  const std::uint64_t split_tag = split == Split::train ? 0 : 1;
  for (int n = 0; n < count; ++n)
    d.samples.push_back(gen_sample(scenario, derive_seed(seed, {split_tag, static_cast<std::uint64_t>(n)})));
  return d;
}

void check_conforms(const ChannelSample& s, const Scenario& sc) {
  const int K = sc.num_bs, U = sc.total_ues();
  if (s.num_bs != K || s.sub6.rows() != U || s.sub6.cols() != sc.sub6_antennas ||
      static_cast<int>(s.mm_full.size()) != U * K || s.mm_partial.size() != s.mm_full.size() ||
      static_cast<int>(s.active_idx.size()) != sc.active_antennas)
    throw DimensionError("channel sample does not match scenario dimensions");
  for (std::size_t i = 0; i < s.mm_full.size(); ++i) {
    if (s.mm_full[i].size() != sc.mm_antennas || s.mm_partial[i].size() != sc.active_antennas)
      throw DimensionError("channel vector length does not match scenario");
  }
}

namespace {

nlohmann::json scenario_json(const Scenario& s) {
  return {{"K", s.num_bs},
          {"I", s.ues_per_bs},
          {"N_m", s.mm_antennas},
          {"N_s", s.sub6_antennas},
          {"N_bar", s.active_antennas},
          {"N_c", s.num_paths},
          {"P", s.max_power},
          {"sigma2", s.noise_power},
          {"B_mm", s.mm_bandwidth},
          {"B_sub", s.sub6_bandwidth},
          {"seed", s.seed},
          {"structure", to_string(s.structure)}};
}

Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.num_bs = j.at("K");
  s.ues_per_bs = j.at("I").get<std::vector<int>>();
  s.mm_antennas = j.at("N_m");
  s.sub6_antennas = j.at("N_s");
  s.active_antennas = j.at("N_bar");
  s.num_paths = j.at("N_c");
  s.max_power = j.at("P").get<std::vector<double>>();
  s.noise_power = j.at("sigma2");
  s.mm_bandwidth = j.at("B_mm");
  s.sub6_bandwidth = j.at("B_sub");
  s.seed = j.at("seed");
  s.structure = parse_structure(j.at("structure"));
  return s;
}

void append_complex(std::vector<double>& out, const cd& z) {
  out.push_back(z.real());
  out.push_back(z.imag());
}

}  // namespace

void write_dataset(const Dataset& d, const std::string& stem) {
  const auto& sc = d.scenario;
  const std::int64_t n = static_cast<std::int64_t>(d.samples.size());
  const int K = sc.num_bs, U = sc.total_ues();
  std::vector<double> sub6, full, partial;
  for (const auto& s : d.samples) {
    check_conforms(s, sc);
    for (int u = 0; u < U; ++u)
      for (int a = 0; a < sc.sub6_antennas; ++a) append_complex(sub6, s.sub6(u, a));
    for (const auto& h : s.mm_full)
      for (Eigen::Index a = 0; a < h.size(); ++a) append_complex(full, h[a]);
    for (const auto& h : s.mm_partial)
      for (Eigen::Index a = 0; a < h.size(); ++a) append_complex(partial, h[a]);
  }
  TensorBlobWriter w;
  w.add("sub6", {n, U, sc.sub6_antennas}, true, sub6);
  w.add("mm_full", {n, U, K, sc.mm_antennas}, true, full);
  w.add("mm_partial", {n, U, K, sc.active_antennas}, true, partial);
  nlohmann::json meta;
  meta["format"] = "hbf-dataset";
  meta["version"] = 1;
  meta["split"] = to_string(d.split);
  meta["num_samples"] = n;
  meta["scenario"] = scenario_json(sc);
  meta["active_idx"] = d.samples.empty() ? uniform_active_indices(sc.mm_antennas, sc.active_antennas)
                                         : d.samples.front().active_idx;
  w.write(stem, meta);
}

Dataset read_dataset(const std::string& stem) {
  TensorBlobReader r(stem);
  const auto& m = r.manifest();
  if (m.value("format", "") != "hbf-dataset") throw InputError(stem + ".json is not a dataset manifest");
  Dataset d;
  d.scenario = scenario_from_json(m.at("scenario"));
  d.split = m.at("split") == "train" ? Split::train : Split::test;
  const auto& sc = d.scenario;
  const int n = m.at("num_samples"), K = sc.num_bs, U = sc.total_ues();
  auto idx = m.at("active_idx").get<std::vector<int>>();
  auto sub6 = r.values("sub6"), full = r.values("mm_full"), partial = r.values("mm_partial");
  const std::size_t per_sub6 = static_cast<std::size_t>(2 * U * sc.sub6_antennas);
  const std::size_t per_full = static_cast<std::size_t>(2 * U * K * sc.mm_antennas);
  const std::size_t per_part = static_cast<std::size_t>(2 * U * K * sc.active_antennas);
  if (sub6.size() != per_sub6 * n || full.size() != per_full * n || partial.size() != per_part * n)
    throw DimensionError("dataset blob does not match manifest shapes");
  auto read_vec = [](const std::vector<double>& src, std::size_t& pos, int len) {
    Eigen::VectorXcd v(len);
    for (int a = 0; a < len; ++a, pos += 2) v[a] = cd(src[pos], src[pos + 1]);
    return v;
  };
  std::size_t ps = 0, pf = 0, pp = 0;
  for (int i = 0; i < n; ++i) {
    ChannelSample s;
    s.num_bs = K;
    s.active_idx = idx;
    s.sub6.resize(U, sc.sub6_antennas);
    for (int u = 0; u < U; ++u) s.sub6.row(u) = read_vec(sub6, ps, sc.sub6_antennas).transpose();
    for (int e = 0; e < U * K; ++e) s.mm_full.push_back(read_vec(full, pf, sc.mm_antennas));
    for (int e = 0; e < U * K; ++e) s.mm_partial.push_back(read_vec(partial, pp, sc.active_antennas));
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace hbf
