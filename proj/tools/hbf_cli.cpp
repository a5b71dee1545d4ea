// hbf: dataset generation, HGNN training, evaluation, baselines, ablations, reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hbf/baselines.hpp"
#include "hbf/errors.hpp"
#include "hbf/eval.hpp"
#include "hbf/experiments.hpp"
#include "hbf/hgnn.hpp"
#include "hbf/run_config.hpp"

namespace fs = std::filesystem;
using namespace hbf;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "runs";
};

RunConfig resolve(const Common& c) {
  auto overrides = c.sets;
  if (c.seed_given) {
    overrides.push_back("scenario.seed=" + std::to_string(c.seed));
    overrides.push_back("training.seed=" + std::to_string(c.seed));
  }
  return c.config.empty() ? parse_run_config("", overrides) : load_run_config(c.config, overrides);
}

fs::path run_dir(const Common& c, const RunConfig& cfg) {
  fs::path d = fs::path(c.out) / cfg.run_name();
  fs::create_directories(d);
  std::ofstream(d / "config.ini") << cfg.canonical();
  return d;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw InputError(std::string(what) + " not found: " + path);
}

std::pair<Dataset, Dataset> datasets(const RunConfig& cfg) {
  if (!cfg.io.dataset.empty()) {
    const auto stem = [&](const char* s) { return (fs::path(cfg.io.dataset) / s).string(); };
    require_file(stem("train") + ".json", "training set");
    require_file(stem("test") + ".json", "test set");
    return {read_dataset(stem("train")), read_dataset(stem("test"))};
  }
  const auto ctx = cfg.context();
  return {ctx.train_set(), ctx.test_set()};
}

Dataset test_only(const RunConfig& cfg) {
  if (!cfg.io.dataset.empty()) {
    const auto stem = (fs::path(cfg.io.dataset) / "test").string();
    require_file(stem + ".json", "test set");
    return read_dataset(stem);
  }
  return cfg.context().test_set();
}

int gen_data(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = run_dir(c, cfg);
  const auto ctx = cfg.context();
  write_dataset(ctx.train_set(), (dir / "train").string());
  write_dataset(ctx.test_set(), (dir / "test").string());
  std::cout << "wrote " << (dir / "train").string() << ".{json,bin} and " << (dir / "test").string()
            << ".{json,bin}\n";
  return 0;
}

int train_cmd(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = run_dir(c, cfg);
  const auto [train_set, test_set] = datasets(cfg);
  auto opts = cfg.train_options();
  std::ofstream curve(dir / "curve.csv");
  curve << "epoch,lr,train_se,test_se\n";
  opts.on_epoch = [&](const EpochStats& s) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g", s.epoch, s.lr, s.train_se, s.test_se);
    curve << line << '\n' << std::flush;
    std::printf("epoch %3d  lr %.2e  train %.4f  test %.4f\n", s.epoch, s.lr, s.train_se, s.test_se);
  };
  auto res = train(train_set, test_set, cfg.model, opts);
  save_checkpoint(res.params, cfg.model, (dir / "model").string());
  std::printf("checkpoint %s  final test sum-SE %.6f\n", (dir / "model").c_str(),
              res.curve.empty() ? res.initial_test_se : res.curve.back().test_se);
  return 0;
}

std::string checkpoint_stem(const Common& c, const RunConfig& cfg) {
  const std::string stem =
      cfg.io.checkpoint.empty() ? (fs::path(c.out) / cfg.run_name() / "model").string() : cfg.io.checkpoint;
  require_file(stem + ".json", "checkpoint");
  return stem;
}

int eval_cmd(const Common& c) {
  auto cfg = resolve(c);
  const auto stem = checkpoint_stem(c, cfg);
  auto [model, params] = load_checkpoint(stem);
  if (!(params.dims == HgnnDims::of(cfg.scenario)) && cfg.experiment.kind != "nbar_sweep")
    throw InputError("checkpoint dimensions do not match the configured scenario");
  cfg.model = model;
  const auto dir = run_dir(c, cfg);
  const Dataset test = test_only(cfg);
  std::vector<ExperimentRow> rows{hgnn_row("eval", params, model, test, cfg.seed)};
  const auto ctx = cfg.context();
  const auto& kind = cfg.experiment.kind;
  if (kind == "snr_sweep") {
    auto s = snr_sweep(ctx, &params, cfg.experiment.snr_db);
    rows.insert(rows.end(), s.rows.begin(), s.rows.end());
  } else if (kind == "phase_robustness") {
    auto r = phase_robustness(ctx, params, cfg.experiment.phase_deg);
    rows.insert(rows.end(), r.begin(), r.end());
  } else if (kind == "scalability") {
    auto r = scalability(ctx, params, cfg.experiment.scales);
    rows.insert(rows.end(), r.begin(), r.end());
  } else if (kind == "timing") {
    auto r = timing(ctx, params, nullptr);
    rows.insert(rows.end(), r.begin(), r.end());
  } else if (kind == "nbar_sweep") {
    auto r = nbar_sweep(ctx, cfg.experiment.nbar);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const auto out = dir / ("metrics-" + kind + ".csv");
  write_csv(out.string(), rows);
  std::printf("test sum-SE %.10f\nwrote %s\n", rows.front().mean_sum_se, out.c_str());
  return 0;
}

int baseline_cmd(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = run_dir(c, cfg);
  const auto [train_set, test_set] = datasets(cfg);
  auto rows = baseline_rows("baseline", test_set, cfg.experiment.baseline_samples, cfg.seed);
  for (Structure s : cfg.experiment.structures) {
    const auto mlp = train_mlp(train_set, test_set, s, cfg.mlp, cfg.train_options());
    rows.push_back(mlp_row("baseline", mlp.model, test_set, cfg.seed));
  }
  write_csv((dir / "baseline.csv").string(), rows);
  for (const auto& r : rows) std::printf("%-18s %-9s %.4f\n", r.method.c_str(), r.structure.c_str(), r.mean_sum_se);
  return 0;
}

int ablate_cmd(const Common& c) {
  const auto cfg = resolve(c);
  const auto dir = run_dir(c, cfg);
  std::vector<ExperimentRow> rows;
  for (Structure s : cfg.experiment.structures) {
    auto ctx = cfg.context();
    ctx.scenario.structure = s;
    ctx.model.structure = s;
    ctx.scenario.validate();
    auto r = ablation(ctx);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  write_csv((dir / "ablation.csv").string(), rows);
  for (const auto& r : rows) std::printf("%-28s %-9s %.4f\n", r.method.c_str(), r.structure.c_str(), r.mean_sum_se);
  return 0;
}

bool has_metrics_header(const fs::path& p) {
  std::ifstream f(p);
  std::string line;
  return std::getline(f, line) && line == csv_header();
}

int report_cmd(const Common& c, const std::vector<std::string>& inputs) {
  std::vector<std::vector<ExperimentRow>> tables;
  const fs::path report_dir = fs::path(c.out) / "report";
  if (!inputs.empty()) {
    for (const auto& p : inputs) {
      require_file(p, "results CSV");
      tables.push_back(read_csv(p));
    }
  } else {
    if (!fs::exists(c.out)) throw InputError("results directory not found: " + c.out);
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(c.out)) {
      if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
      if (e.path().parent_path() == report_dir) continue;
      if (has_metrics_header(e.path())) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    for (const auto& p : found) tables.push_back(read_csv(p.string()));
  }
  if (tables.empty()) throw InputError("no result CSVs to join");
  const auto merged = merge_rows(tables);
  fs::create_directories(report_dir);
  write_csv((report_dir / "merged.csv").string(), merged);
  write_series((report_dir / "series.csv").string(), plot_series(merged));
  std::printf("joined %zu tables, %zu rows -> %s\n", tables.size(), merged.size(), report_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid beamforming workbench: heterogeneous GNN precoders and classical baselines"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::string> report_inputs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.sets, "override, section.key=value (repeatable)")->allow_extra_args(false);
    sub->add_option("--seed", common.seed, "seed for datasets and training")->each([&](const std::string&) {
      common.seed_given = true;
    });
    sub->add_option("--out", common.out, "artifact root directory")->capture_default_str();
  };

  auto* gen = app.add_subcommand("gen-data", "write train/test datasets");
  auto* tr = app.add_subcommand("train", "train the HGNN; writes checkpoint and learning curve");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (plus the configured experiment)");
  auto* bl = app.add_subcommand("baseline", "WMMSE, AltMin and flat-MLP baselines");
  auto* ab = app.add_subcommand("ablate", "attention x residual grid");
  auto* rp = app.add_subcommand("report", "join result CSVs into merged tables and plot series");
  for (auto* s : {gen, tr, ev, bl, ab, rp}) add_common(s);
  rp->add_option("inputs", report_inputs, "CSV files (default: every result CSV under --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return gen_data(common);
    if (*tr) return train_cmd(common);
    if (*ev) return eval_cmd(common);
    if (*bl) return baseline_cmd(common);
    if (*ab) return ablate_cmd(common);
    if (*rp) return report_cmd(common, report_inputs);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
