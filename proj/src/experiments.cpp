#include "hbf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "hbf/errors.hpp"
#include "hbf/eval.hpp"

namespace hbf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\"") != std::string::npos) throw InputError("CSV field may not contain ',' or quotes: " + s);
}

ExperimentRow base_row(const std::string& experiment, const std::string& method, Structure structure,
                       const Scenario& sc, std::uint64_t seed) {
  ExperimentRow r;
  r.experiment = experiment;
  r.method = method;
  r.structure = to_string(structure);
  r.K = sc.num_bs;
  r.I_sum = sc.total_ues();
  r.N_bar = sc.active_antennas;
  r.snr_db = snr_db(sc);
  r.seed = seed;
  return r;
}

void set_overhead(ExperimentRow& r, const Scenario& sc, OverheadMethod m, Structure s) {
  const Overhead o = overhead_report(sc, m, s);
  r.pilot_overhead = o.pilots;
  r.backhaul_overhead = o.backhaul;
}

std::string tagged(const std::string& experiment, const std::string& name, double value) {
  std::ostringstream os;
  os << experiment << '[' << name << '=' << value << ']';
  return os.str();
}

}  // namespace

std::string ExperimentRow::key() const {
  std::ostringstream os;
  os << experiment << ',' << method << ',' << structure << ',' << K << ',' << I_sum << ',' << N_bar << ','
     << fmt(snr_db) << ',' << seed;
  return os.str();
}

std::string csv_header() {
  return "experiment,method,structure,K,I_sum,N_bar,snr_db,seed,mean_sum_se,wallclock_s,flops,pilot_overhead,"
         "backhaul_overhead";
}

std::string to_csv(const ExperimentRow& r) {
  check_field(r.experiment);
  check_field(r.method);
  check_field(r.structure);
  std::ostringstream os;
  os << r.experiment << ',' << r.method << ',' << r.structure << ',' << r.K << ',' << r.I_sum << ',' << r.N_bar
     << ',' << fmt(r.snr_db) << ',' << r.seed << ',' << fmt(r.mean_sum_se) << ',' << fmt(r.wallclock_s) << ','
     << fmt(r.flops) << ',' << r.pilot_overhead << ',' << r.backhaul_overhead;
  return os.str();
}

void write_csv(const std::string& path, const std::vector<ExperimentRow>& rows) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << csv_header() << '\n';
  for (const auto& r : rows) f << to_csv(r) << '\n';
}

std::vector<ExperimentRow> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != csv_header()) throw InputError(path + ": unexpected CSV header");
  std::vector<ExperimentRow> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) c.push_back(cell);
    if (c.size() != 13) throw InputError(path + ":" + std::to_string(lineno) + ": expected 13 fields");
    try {
      ExperimentRow r;
      r.experiment = c[0];
      r.method = c[1];
      r.structure = c[2];
      r.K = std::stoi(c[3]);
      r.I_sum = std::stoi(c[4]);
      r.N_bar = std::stoi(c[5]);
      r.snr_db = std::stod(c[6]);
      r.seed = std::stoull(c[7]);
      r.mean_sum_se = std::stod(c[8]);
      r.wallclock_s = std::stod(c[9]);
      r.flops = std::stod(c[10]);
      r.pilot_overhead = std::stoll(c[11]);
      r.backhaul_overhead = std::stoll(c[12]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::vector<ExperimentRow> merge_rows(const std::vector<std::vector<ExperimentRow>>& tables) {
  std::map<std::string, ExperimentRow> by_key;
  std::vector<std::string> order;
  for (const auto& t : tables) {
    for (const auto& r : t) {
      const auto k = r.key();
      auto it = by_key.find(k);
      if (it == by_key.end()) {
        by_key.emplace(k, r);
        order.push_back(k);
      } else if (it->second.mean_sum_se != r.mean_sum_se || it->second.flops != r.flops ||
                 it->second.pilot_overhead != r.pilot_overhead ||
                 it->second.backhaul_overhead != r.backhaul_overhead) {
        throw InputError("conflicting results for key (" + k + ")");
      }
    }
  }
  std::vector<ExperimentRow> out;
  for (const auto& k : order) out.push_back(by_key.at(k));
  return out;
}

std::vector<SeriesPoint> plot_series(const std::vector<ExperimentRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, int>> acc;
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  for (const auto& r : rows) {
    std::string exp = r.experiment, x;
    const auto lb = exp.find('[');
    if (lb != std::string::npos && exp.back() == ']') {
      const auto eq = exp.find('=', lb);
      x = exp.substr(eq + 1, exp.size() - eq - 2);
      exp = exp.substr(0, lb);
    }
    const std::string series = r.method + " (" + r.structure + ")";
    double y = r.mean_sum_se;
    if (exp == "snr_sweep") {
      x = fmt(r.snr_db);
    } else if (exp == "nbar_sweep") {
      x = std::to_string(r.N_bar);
    } else if (exp == "scalability") {
      x = "K=" + std::to_string(r.K) + " I_sum=" + std::to_string(r.I_sum);
    } else if (exp == "timing") {
      x = r.method;
      y = r.wallclock_s;
    } else if (x.empty()) {
      x = r.method;
    }
    const auto key = std::make_tuple(exp, series, x);
    auto [it, fresh] = acc.try_emplace(key, 0.0, 0);
    if (fresh) order.push_back(key);
    it->second.first += y;
    it->second.second += 1;
  }
  std::vector<SeriesPoint> out;
  for (const auto& k : order) {
    const auto& [sum, n] = acc.at(k);
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), sum / n, n});
  }
  return out;
}

void write_series(const std::string& path, const std::vector<SeriesPoint>& points) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << "experiment,series,x,y,n\n";
  for (const auto& p : points) f << p.experiment << ',' << p.series << ',' << p.x << ',' << fmt(p.y) << ',' << p.count << '\n';
}

double snr_db(const Scenario& s) { return 10.0 * std::log10(s.max_power.front() / s.noise_power); }

Dataset ExperimentContext::train_set() const {
  return gen_dataset(scenario, train_samples, scenario.seed, Split::train);
}

Dataset ExperimentContext::test_set() const { return gen_dataset(scenario, test_samples, scenario.seed, Split::test); }

ExperimentRow hgnn_row(const std::string& experiment, const HgnnParams& params, const HgnnConfig& config,
                       const Dataset& test, std::uint64_t seed) {
  ExperimentRow r = base_row(experiment, "HGNN", config.structure, test.scenario, seed);
  const auto t0 = Clock::now();
  r.mean_sum_se = mean_sum_se(params, config, test);
  r.wallclock_s = seconds_since(t0) / static_cast<double>(test.samples.size());
  r.flops = flops_estimate(config, test.scenario).total;
  set_overhead(r, test.scenario, OverheadMethod::hgnn, config.structure);
  return r;
}

ExperimentRow mlp_row(const std::string& experiment, const MlpModel& model, const Dataset& test,
                      std::uint64_t seed) {
  ExperimentRow r = base_row(experiment, "MLP", model.shape.structure, test.scenario, seed);
  const auto t0 = Clock::now();
  r.mean_sum_se = mlp_mean_sum_se(model, test);
  r.wallclock_s = seconds_since(t0) / static_cast<double>(test.samples.size());
  r.flops = mlp_flops(model.net.widths());
  set_overhead(r, test.scenario, OverheadMethod::mlp, model.shape.structure);
  return r;
}

namespace {

std::vector<ExperimentRow> baselines_from(const std::string& experiment, const Dataset& test,
                                          const std::vector<DigitalPrecoder>& digital, double wmmse_seconds,
                                          std::uint64_t seed) {
  const auto& sc = test.scenario;
  const double n = static_cast<double>(digital.size());
  std::vector<ExperimentRow> rows;
  ExperimentRow w = base_row(experiment, "WMMSE (digital)", Structure::fully, sc, seed);
  for (std::size_t i = 0; i < digital.size(); ++i) w.mean_sum_se += sum_rate(digital[i].V, test.samples[i], sc) / n;
  w.wallclock_s = wmmse_seconds / n;
  set_overhead(w, sc, OverheadMethod::altmin, Structure::fully);
  rows.push_back(w);
  for (Structure s : {Structure::fully, Structure::partially}) {
    bool divisible = true;
    for (int I : sc.ues_per_bs) divisible = divisible && sc.mm_antennas % I == 0;
    if (s == Structure::partially && !divisible) continue;
    ExperimentRow r = base_row(experiment, altmin_label(s), s, sc, seed);
    AltMinOptions ao;
    ao.seed = seed;
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < digital.size(); ++i) {
      ao.seed = derive_seed(seed, {i});
      r.mean_sum_se += sum_rate(factorize(digital[i], sc, s, ao), test.samples[i], sc) / n;
    }
    r.wallclock_s = (seconds_since(t0) + wmmse_seconds) / n;
    set_overhead(r, sc, OverheadMethod::altmin, s);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

std::vector<ExperimentRow> baseline_rows(const std::string& experiment, const Dataset& test, int count,
                                         std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(std::clamp<int>(count, 1, static_cast<int>(test.samples.size())));
  Dataset sub{test.scenario, {test.samples.begin(), test.samples.begin() + static_cast<std::ptrdiff_t>(n)}, test.split};
  std::vector<DigitalPrecoder> digital;
  const auto t0 = Clock::now();
  for (const auto& s : sub.samples) digital.push_back(wmmse(s, sub.scenario));
  return baselines_from(experiment, sub, digital, seconds_since(t0), seed);
}

SnrSweep snr_sweep(const ExperimentContext& ctx, const HgnnParams* params, std::vector<double> grid) {
  std::sort(grid.begin(), grid.end());
  SnrSweep out;
  const Dataset base = ctx.test_set();
  const auto n = static_cast<std::size_t>(std::clamp<int>(ctx.baseline_samples, 1, static_cast<int>(base.samples.size())));
  std::vector<std::vector<Eigen::MatrixXcd>> warm(n);
  for (double snr : grid) {
    Dataset test = base;
    test.scenario.noise_power = test.scenario.max_power.front() / std::pow(10.0, snr / 10.0);
    if (params) {
      out.rows.push_back(hgnn_row("snr_sweep", *params, ctx.model, test, ctx.training.seed));
    }
    Dataset sub{test.scenario, {test.samples.begin(), test.samples.begin() + static_cast<std::ptrdiff_t>(n)}, test.split};
    std::vector<DigitalPrecoder> digital;
    std::vector<double> se;
    std::vector<std::vector<Eigen::MatrixXcd>> precs;
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < n; ++i) {
      WmmseOptions wo;
      wo.init = warm[i];
      digital.push_back(wmmse(sub.samples[i], sub.scenario, wo));
      warm[i] = digital.back().V;
      se.push_back(digital.back().trace.back());
      precs.push_back(digital.back().V);
    }
    const double secs = seconds_since(t0);
    auto rows = baselines_from("snr_sweep", sub, digital, secs, ctx.training.seed);
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    out.wmmse_se.push_back(std::move(se));
    out.wmmse_precoders.push_back(std::move(precs));
  }
  return out;
}

std::vector<ExperimentRow> ablation(const ExperimentContext& ctx) {
  const Dataset train_set = ctx.train_set(), test = ctx.test_set();
  std::vector<ExperimentRow> rows;
  for (bool attention : {true, false}) {
    for (bool residual : {true, false}) {
      HgnnConfig c = ctx.model;
      c.attention = attention;
      c.residual = residual;
      const TrainResult tr = train(train_set, test, c, ctx.training);
      ExperimentRow r = hgnn_row("ablation", tr.params, c, test, ctx.training.seed);
      r.method = std::string("HGNN") + (attention ? "" : " -attention") + (residual ? "" : " -residual");
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<ExperimentRow> nbar_sweep(const ExperimentContext& ctx, const std::vector<int>& grid) {
  std::vector<ExperimentRow> rows;
  for (int nbar : grid) {
    ExperimentContext c = ctx;
    c.scenario.active_antennas = nbar;
    c.scenario.validate();
    const Dataset test = c.test_set();
    const TrainResult tr = train(c.train_set(), test, c.model, c.training);
    rows.push_back(hgnn_row("nbar_sweep", tr.params, c.model, test, ctx.training.seed));
  }
  return rows;
}

std::vector<ExperimentRow> phase_robustness(const ExperimentContext& ctx, const HgnnParams& params,
                                            const std::vector<double>& sigma_deg) {
  const Dataset clean = ctx.test_set();
  std::vector<ExperimentRow> rows;
  for (double sigma : sigma_deg) {
    Dataset noisy = clean;
    for (std::size_t i = 0; i < noisy.samples.size(); ++i) {
      Rng rng(derive_seed(ctx.scenario.seed, {0x7068'6173ULL, i}));
      noisy.samples[i] = with_phase_error(clean.samples[i], sigma, rng);
    }
    rows.push_back(hgnn_row(tagged("phase_robustness", "sigma_deg", sigma), params, ctx.model, noisy,
                            ctx.training.seed));
  }
  return rows;
}

std::vector<ExperimentRow> scalability(const ExperimentContext& ctx, const HgnnParams& params,
                                       const std::vector<std::vector<int>>& shapes) {
  std::vector<ExperimentRow> rows;
  for (const auto& shape : shapes) {
    ExperimentContext c = ctx;
    c.scenario.num_bs = static_cast<int>(shape.size());
    c.scenario.ues_per_bs = shape;
    c.scenario.max_power.assign(shape.size(), ctx.scenario.max_power.front());
    c.scenario.validate();
    rows.push_back(hgnn_row("scalability", params, ctx.model, c.test_set(), ctx.training.seed));
  }
  return rows;
}

std::vector<ExperimentRow> timing(const ExperimentContext& ctx, const HgnnParams& params, const MlpModel* mlp) {
  const Dataset test = ctx.test_set();
  std::vector<ExperimentRow> rows{hgnn_row("timing", params, ctx.model, test, ctx.training.seed)};
  if (mlp) rows.push_back(mlp_row("timing", *mlp, test, ctx.training.seed));
  auto b = baseline_rows("timing", test, ctx.baseline_samples, ctx.training.seed);
  rows.insert(rows.end(), b.begin(), b.end());
  return rows;
}

}  // namespace hbf
