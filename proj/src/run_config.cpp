#include "hbf/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hbf/errors.hpp"

namespace hbf {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) { return boost::algorithm::trim_copy(s); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  if (trim(s).empty()) return parts;
  boost::algorithm::split(parts, s, boost::is_any_of(","));
  for (auto& p : parts) p = trim(p);
  return parts;
}

std::string join(const std::vector<std::string>& v) { return boost::algorithm::join(v, ","); }

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
std::string join_nums(const std::vector<T>& v) {
  std::vector<std::string> s;
  for (const auto& x : v) s.push_back(num(static_cast<double>(x)));
  return join(s);
}

// Collects conversion errors instead of stopping at the first one.
class Reader {
 public:
  Reader(const pt::ptree& tree, std::vector<std::string>& errors) : tree_(tree), errors_(errors) {}

  template <class T, class F>
  void read(const std::string& path, T& out, F&& convert) {
    seen_.insert(path);
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
    if (!v) return;
    try {
      out = convert(trim(*v));
    } catch (const std::exception&) {
      errors_.push_back(path + ": cannot parse '" + trim(*v) + "'");
    }
  }

  void integer(const std::string& path, int& out) {
    read(path, out, [](const std::string& s) {
      std::size_t pos = 0;
      const int v = std::stoi(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void unsigned64(const std::string& path, std::uint64_t& out) {
    read(path, out, [](const std::string& s) {
      std::size_t pos = 0;
      if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return static_cast<std::uint64_t>(v);
    });
  }
  void real(const std::string& path, double& out) {
    read(path, out, [](const std::string& s) {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    });
  }
  void boolean(const std::string& path, bool& out) {
    read(path, out, [](const std::string& s) {
      const auto l = boost::algorithm::to_lower_copy(s);
      if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
      if (l == "false" || l == "0" || l == "no" || l == "off") return false;
      throw std::invalid_argument(s);
    });
  }
  void text(const std::string& path, std::string& out) {
    read(path, out, [](const std::string& s) { return s; });
  }
  void ints(const std::string& path, std::vector<int>& out) {
    read(path, out, [](const std::string& s) {
      std::vector<int> v;
      for (const auto& p : split_list(s)) {
        std::size_t pos = 0;
        v.push_back(std::stoi(p, &pos));
        if (pos != p.size()) throw std::invalid_argument(p);
      }
      return v;
    });
  }
  void reals(const std::string& path, std::vector<double>& out) {
    read(path, out, [](const std::string& s) {
      std::vector<double> v;
      for (const auto& p : split_list(s)) {
        std::size_t pos = 0;
        v.push_back(std::stod(p, &pos));
        if (pos != p.size()) throw std::invalid_argument(p);
      }
      return v;
    });
  }

  // Every key present in the tree but never read.
  void report_unknown() {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) {
        errors_.push_back("'" + section + "' must sit inside a section");
        continue;
      }
      for (const auto& [key, value] : body) {
        (void)value;
        const auto p = section + "." + key;
        if (!seen_.count(p)) errors_.push_back("unknown key " + p);
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::vector<std::vector<int>> parse_scales(const std::string& s) {
  std::vector<std::vector<int>> out;
  for (const auto& item : split_list(s)) {
    std::vector<std::string> kv;
    boost::algorithm::split(kv, item, boost::is_any_of("xX"));
    if (kv.size() != 2) throw std::invalid_argument(item);
    const int K = std::stoi(kv[0]), I = std::stoi(kv[1]);
    if (K < 1 || I < 1) throw std::invalid_argument(item);
    out.emplace_back(static_cast<std::size_t>(K), I);
  }
  return out;
}

std::string format_scales(const std::vector<std::vector<int>>& scales) {
  std::vector<std::string> s;
  for (const auto& sh : scales) s.push_back(std::to_string(sh.size()) + "x" + (sh.empty() ? "0" : std::to_string(sh.front())));
  return join(s);
}

}  // namespace

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v = scenario.violations();
  for (auto& m : model.violations()) v.push_back(m);
  if (model.structure != scenario.structure) v.push_back("model structure must equal scenario.structure");
  for (int h : mlp.hidden)
    if (h < 1) v.push_back("mlp.hidden widths must be >= 1");
  if (!(mlp.dropout >= 0 && mlp.dropout < 1)) v.push_back("mlp.dropout must lie in [0, 1)");
  if (epochs < 1) v.push_back("training.epochs must be >= 1");
  if (batch_size < 1) v.push_back("training.batch_size must be >= 1");
  if (!(adam.lr > 0)) v.push_back("training.lr must be > 0");
  if (!(adam.decay > 0 && adam.decay <= 1)) v.push_back("training.lr_decay must lie in (0, 1]");
  if (adam.decay_every < 1) v.push_back("training.decay_every must be >= 1");
  if (train_samples < 1) v.push_back("training.train_samples must be >= 1");
  if (test_samples < 1) v.push_back("training.test_samples must be >= 1");
  if (std::find(kExperimentKinds.begin(), kExperimentKinds.end(), experiment.kind) == kExperimentKinds.end())
    v.push_back("experiment.kind must be one of snr_sweep|ablation|nbar_sweep|phase_robustness|scalability|timing");
  if (experiment.baseline_samples < 1) v.push_back("experiment.baseline_samples must be >= 1");
  for (int n : experiment.nbar)
    if (n < 0 || n > scenario.mm_antennas) v.push_back("experiment.nbar entries must lie in [0, N_m]");
  for (double p : experiment.phase_deg)
    if (!(p >= 0)) v.push_back("experiment.phase_deg entries must be >= 0");
  for (const auto& s : experiment.scales)
    for (int I : s)
      if (I > scenario.mm_antennas) v.push_back("experiment.scales: I_k must not exceed N_m");
  if (experiment.structures.empty()) v.push_back("experiment.structures must not be empty");
  return v;
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  std::vector<std::string> structs;
  for (auto s : experiment.structures) structs.push_back(to_string(s));
  kv["scenario.K"] = std::to_string(scenario.num_bs);
  kv["scenario.I"] = join_nums(scenario.ues_per_bs);
  kv["scenario.N_m"] = std::to_string(scenario.mm_antennas);
  kv["scenario.N_s"] = std::to_string(scenario.sub6_antennas);
  kv["scenario.N_bar"] = std::to_string(scenario.active_antennas);
  kv["scenario.N_c"] = std::to_string(scenario.num_paths);
  kv["scenario.P"] = join_nums(scenario.max_power);
  kv["scenario.sigma2"] = num(scenario.noise_power);
  kv["scenario.B_mm"] = num(scenario.mm_bandwidth);
  kv["scenario.B_sub"] = num(scenario.sub6_bandwidth);
  kv["scenario.seed"] = std::to_string(scenario.seed);
  kv["scenario.structure"] = to_string(scenario.structure);
  kv["model.L"] = std::to_string(model.layers);
  kv["model.D"] = std::to_string(model.hidden);
  kv["model.message_hidden"] = join_nums(model.message_hidden);
  kv["model.combine_hidden"] = join_nums(model.combine_hidden);
  kv["model.rf_hidden"] = join_nums(model.rf_hidden);
  kv["model.bb_hidden"] = join_nums(model.bb_hidden);
  kv["model.dropout"] = num(model.dropout);
  kv["model.attention"] = model.attention ? "true" : "false";
  kv["model.residual"] = model.residual ? "true" : "false";
  kv["mlp.hidden"] = join_nums(mlp.hidden);
  kv["mlp.dropout"] = num(mlp.dropout);
  kv["training.epochs"] = std::to_string(epochs);
  kv["training.batch_size"] = std::to_string(batch_size);
  kv["training.lr"] = num(adam.lr);
  kv["training.lr_decay"] = num(adam.decay);
  kv["training.decay_every"] = std::to_string(adam.decay_every);
  kv["training.seed"] = std::to_string(seed);
  kv["training.train_samples"] = std::to_string(train_samples);
  kv["training.test_samples"] = std::to_string(test_samples);
  kv["experiment.kind"] = experiment.kind;
  kv["experiment.snr_db"] = join_nums(experiment.snr_db);
  kv["experiment.nbar"] = join_nums(experiment.nbar);
  kv["experiment.phase_deg"] = join_nums(experiment.phase_deg);
  kv["experiment.scales"] = format_scales(experiment.scales);
  kv["experiment.baseline_samples"] = std::to_string(experiment.baseline_samples);
  kv["experiment.structures"] = join(structs);
  std::string out, section;
  for (const auto& [k, v] : kv) {
    const auto dot = k.find('.');
    if (k.substr(0, dot) != section) {
      section = k.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += k.substr(dot + 1) + "=" + v + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const {
  // Experiment settings choose what to run against a model, not the model itself.
  std::istringstream in(canonical());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  bool skip = false;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.front() == '[') skip = line == "[experiment]";
    if (skip) continue;
    for (unsigned char c : line + "\n") {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string RunConfig::run_name() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return std::string(buf) + "-s" + std::to_string(seed);
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.adam = adam;
  o.seed = seed;
  return o;
}

ExperimentContext RunConfig::context() const {
  ExperimentContext c;
  c.scenario = scenario;
  c.model = model;
  c.mlp = mlp;
  c.training = train_options();
  c.train_samples = train_samples;
  c.test_samples = test_samples;
  c.baseline_samples = experiment.baseline_samples;
  return c;
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides) {
  std::vector<std::string> errors;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      errors.push_back("override '" + o + "' is not of the form section.key=value");
      continue;
    }
    tree.put(pt::ptree::path_type(trim(o.substr(0, eq)), '.'), trim(o.substr(eq + 1)));
  }

  RunConfig c;
  Reader r(tree, errors);
  auto& s = c.scenario;
  std::vector<int> ues;
  std::vector<double> power;
  std::string structure = to_string(s.structure);
  r.integer("scenario.K", s.num_bs);
  r.ints("scenario.I", ues);
  r.integer("scenario.N_m", s.mm_antennas);
  r.integer("scenario.N_s", s.sub6_antennas);
  r.integer("scenario.N_bar", s.active_antennas);
  r.integer("scenario.N_c", s.num_paths);
  r.reals("scenario.P", power);
  r.real("scenario.sigma2", s.noise_power);
  r.real("scenario.B_mm", s.mm_bandwidth);
  r.real("scenario.B_sub", s.sub6_bandwidth);
  r.unsigned64("scenario.seed", s.seed);
  r.text("scenario.structure", structure);
  try {
    s.structure = parse_structure(structure);
  } catch (const std::exception&) {
    errors.push_back("scenario.structure must be fully|partially");
  }
  auto broadcast = [&](auto& field, const auto& given, const auto& fallback) {
    using V = std::decay_t<decltype(field)>;
    const auto& src = given.empty() ? fallback : given;
    if (src.size() == 1 && s.num_bs >= 1)
      field = V(static_cast<std::size_t>(s.num_bs), src.front());
    else
      field = V(src.begin(), src.end());
  };
  broadcast(s.ues_per_bs, ues, std::vector<int>{s.ues_per_bs.front()});
  broadcast(s.max_power, power, std::vector<double>{s.max_power.front()});

  auto& m = c.model;
  r.integer("model.L", m.layers);
  r.integer("model.D", m.hidden);
  r.ints("model.message_hidden", m.message_hidden);
  r.ints("model.combine_hidden", m.combine_hidden);
  r.ints("model.rf_hidden", m.rf_hidden);
  r.ints("model.bb_hidden", m.bb_hidden);
  r.real("model.dropout", m.dropout);
  r.boolean("model.attention", m.attention);
  r.boolean("model.residual", m.residual);
  m.structure = s.structure;

  r.ints("mlp.hidden", c.mlp.hidden);
  r.real("mlp.dropout", c.mlp.dropout);

  r.integer("training.epochs", c.epochs);
  r.integer("training.batch_size", c.batch_size);
  r.real("training.lr", c.adam.lr);
  r.real("training.lr_decay", c.adam.decay);
  r.integer("training.decay_every", c.adam.decay_every);
  r.unsigned64("training.seed", c.seed);
  r.integer("training.train_samples", c.train_samples);
  r.integer("training.test_samples", c.test_samples);

  auto& e = c.experiment;
  r.text("experiment.kind", e.kind);
  r.reals("experiment.snr_db", e.snr_db);
  r.ints("experiment.nbar", e.nbar);
  r.reals("experiment.phase_deg", e.phase_deg);
  r.read("experiment.scales", e.scales, parse_scales);
  r.integer("experiment.baseline_samples", e.baseline_samples);
  r.read("experiment.structures", e.structures, [](const std::string& v) {
    std::vector<Structure> out;
    for (const auto& p : split_list(v)) out.push_back(parse_structure(p));
    return out;
  });

  r.text("io.dataset", c.io.dataset);
  r.text("io.checkpoint", c.io.checkpoint);
  r.text("io.results", c.io.results);
  r.report_unknown();

  for (auto& v : c.violations()) errors.push_back(v);
  if (!errors.empty()) {
    std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const auto& err : errors) msg += "\n  " + err;
    throw ValidationError(msg);
  }
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), overrides);
}

}  // namespace hbf
