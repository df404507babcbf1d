// Command-line front end: run, compare, gen-trace, export-qtable.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "qoco/config.hpp"
#include "qoco/harness.hpp"
#include "qoco/metrics.hpp"
#include "qoco/qtable_io.hpp"
#include "qoco/workload.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::string> methods;
  std::vector<std::string> sets;
};

qoco::ExperimentConfig build_config(const Common& c) {
  qoco::ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = qoco::parse_config_lines(qoco::read_lines(c.config), c.config,
                                   std::filesystem::path(c.config).parent_path());
  }
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw qoco::ConfigError("--set expects key=value, got '" + kv + "'");
    qoco::set_config_value(cfg, std::string(qoco::trim(kv.substr(0, eq))),
                           std::string(qoco::trim(kv.substr(eq + 1))));
  }
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.methods.empty()) {
    std::string joined;
    for (const auto& m : c.methods) joined += (joined.empty() ? "" : ",") + m;
    qoco::set_config_value(cfg, "experiment.methods", joined);
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  try {
    cfg.validate();
  } catch (const qoco::ConfigError& e) {
    if (c.config.empty()) throw;
    throw qoco::ConfigError(c.config + ": " + e.what());
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_methods) {
  app->add_option("--config", c.config, "experiment config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seeds, "seed (repeatable); overrides experiment.seeds");
  app->add_option("--out", c.out, "output location");
  if (with_methods)
    app->add_option("--method", c.methods, "method (repeatable): none, coto, bypass, lqoco");
  app->add_option("--set", c.sets, "override a config key, e.g. --set workload.id=S-6");
}

int cmd_run(const Common& c) {
  const auto cfg = build_config(c);
  qoco::RunOptions opts;
  opts.running_p999 = cfg.write_logs;
  opts.keep_latencies = false;
  const auto res = qoco::run_experiment(cfg, opts);
  for (const auto seed : cfg.seeds) {
    std::vector<qoco::MetricsReport> reps;
    for (const auto& r : res.runs)
      if (r.seed == seed) reps.push_back(r.report);
    std::cout << "seed " << seed << ": ";
    if (reps.size() >= 2) {
      qoco::print_comparison(std::cout, qoco::compare(reps));
    } else {
      std::cout << reps.front().method << " throughput=" << reps.front().mean_throughput
                << " jitter=" << reps.front().jitter
                << " p999=" << reps.front().p999_latency << '\n';
    }
  }
  std::cout << "outputs in " << cfg.output_dir << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& files) {
  std::vector<qoco::MetricsReport> reps;
  for (const auto& f : files) {
    auto part = qoco::load_reports(f);
    reps.insert(reps.end(), part.begin(), part.end());
  }
  qoco::print_comparison(std::cout, qoco::compare(reps));
  return 0;
}

int cmd_gen_trace(const Common& c) {
  auto cfg = build_config(c);
  if (c.out.empty()) throw qoco::ConfigError("gen-trace needs --out <file>");
  const auto wl = qoco::resolve_workload(cfg);
  std::vector<qoco::IoRequest> trace;
  if (wl.sequence) {
    trace = qoco::generate_trace(*wl.sequence, qoco::trace_seed(cfg.seeds.front()));
  } else {
    trace = *wl.trace;
  }
  qoco::save_trace(trace, c.out);
  std::cout << trace.size() << " requests written to " << c.out << '\n';
  return 0;
}

int cmd_export_qtable(const Common& c, bool untrained) {
  auto cfg = build_config(c);
  if (c.out.empty()) throw qoco::ConfigError("export-qtable needs --out <file>");
  if (untrained) {
    qoco::save_qtable(qoco::make_control_qtable(cfg.lqoco.actions), cfg.lqoco.bands, c.out);
  } else {
    const auto wl = qoco::resolve_workload(cfg);
    std::optional<qoco::QTable> warm;
    if (!cfg.warm_start.empty())
      warm = qoco::load_qtable(cfg.warm_start, cfg.lqoco.bands, cfg.lqoco.actions);
    qoco::RunOptions opts;
    opts.running_p999 = false;
    opts.keep_latencies = false;
    const auto r = qoco::run_one(cfg, wl, qoco::Method::LQoCo, cfg.seeds.front(),
                                 warm ? &*warm : nullptr, opts);
    qoco::save_qtable(*r.qtable, cfg.lqoco.bands, c.out);
  }
  std::cout << "Q table written to " << c.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qoco: cache overload control simulator"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "run every (method, seed) pair of an experiment");
  add_common(run, run_opts, true);

  std::vector<std::string> report_files;
  auto* cmp = app.add_subcommand("compare", "compare report files");
  cmp->add_option("reports", report_files, "report files")->required()->check(CLI::ExistingFile);

  Common trace_opts;
  auto* gen = app.add_subcommand("gen-trace", "write the request trace of a workload");
  add_common(gen, trace_opts, false);

  Common q_opts;
  bool untrained = false;
  auto* exq = app.add_subcommand("export-qtable", "train on one run and save the Q table");
  add_common(exq, q_opts, false);
  exq->add_flag("--untrained", untrained, "save the initial all-zero table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_opts);
    if (*cmp) return cmd_compare(report_files);
    if (*gen) return cmd_gen_trace(trace_opts);
    if (*exq) return cmd_export_qtable(q_opts, untrained);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
