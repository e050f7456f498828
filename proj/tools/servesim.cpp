// servesim: discrete-event simulator of batched DNN inference servers.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "servesim/servesim.hpp"

namespace {

using namespace servesim;

RunReport simulate(const ScenarioConfig& cfg,
                   std::vector<TraceRecord>* trace = nullptr) {
  RunReport rep = cfg.two_stage ? run_two_stage(cfg, trace)
                                : run_pipeline(cfg, trace);
  rep.scenario_hash = scenario_hash(cfg);
  return rep;
}

void print_summary(const RunReport& r) {
  std::printf("throughput        %10.2f req/s\n", r.throughput_rps);
  std::printf("latency mean      %10.0f us\n", r.latency_mean_us);
  std::printf("latency p50       %10llu us\n",
              static_cast<unsigned long long>(r.latency_p50_us));
  std::printf("latency p99       %10llu us\n",
              static_cast<unsigned long long>(r.latency_p99_us));
  std::printf("share prep        %9.1f %%\n", 100 * r.share_prep());
  std::printf("share queue       %9.1f %%\n", 100 * r.share_queue());
  std::printf("share transfer    %9.1f %%\n", 100 * r.share_transfer());
  std::printf("share inference   %9.1f %%\n", 100 * r.share_inference());
  std::printf("share broker      %9.1f %%\n", 100 * r.share_broker());
  std::printf("share reload      %9.1f %%\n", 100 * r.share_reload());
  std::printf("energy cpu        %10.3f J/img\n", r.energy_cpu_j());
  std::printf("energy gpu        %10.3f J/img\n", r.energy_gpu_j());
  std::printf("completions       %10llu (warm-up discarded: %llu)\n",
              static_cast<unsigned long long>(r.completions),
              static_cast<unsigned long long>(r.warm_up_discarded));
  if (r.evictions) {
    std::printf("evictions         %10llu\n",
                static_cast<unsigned long long>(r.evictions));
  }
}

ScenarioConfig load_with(const std::string& path,
                         const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> seed) {
  std::vector<std::string> ovr = overrides;
  if (seed) ovr.push_back("seed=" + std::to_string(*seed));
  return load_scenario(path, ovr);
}

unsigned sweep_threads() {
  if (const char* env = std::getenv("SERVESIM_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

int cmd_run(const std::string& scenario, const std::vector<std::string>& overrides,
            std::optional<std::uint64_t> seed, const std::string& out,
            const std::string& trace_path) {
  const ScenarioConfig cfg = load_with(scenario, overrides, seed);
  std::vector<TraceRecord> trace;
  const RunReport rep = simulate(cfg, trace_path.empty() ? nullptr : &trace);
  print_summary(rep);
  if (!out.empty()) {
    std::ofstream f(out);
    f << csv_header() << '\n' << csv_row(rep) << '\n';
  }
  if (!trace_path.empty()) {
    std::ofstream f(trace_path);
    write_trace_jsonl(f, trace);
  }
  return 0;
}

int cmd_sweep(const std::string& scenario, const std::vector<std::string>& overrides,
              std::optional<std::uint64_t> seed, const std::string& param,
              const std::vector<std::string>& values, const std::string& out) {
  std::vector<ScenarioConfig> cfgs;
  for (const std::string& v : values) {
    std::vector<std::string> ovr = overrides;
    ovr.push_back(param + "=" + v);
    cfgs.push_back(load_with(scenario, ovr, seed));
  }
  std::vector<std::string> rows(cfgs.size());
  std::atomic<std::size_t> next{0};
  std::string error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfgs.size()) return;
      try {
        rows[i] = csv_row(simulate(cfgs[i]), param, values[i]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (error.empty()) error = param + "=" + values[i] + ": " + e.what();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(sweep_threads(), cfgs.size());
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!error.empty()) throw std::runtime_error(error);

  std::ostringstream csv;
  csv << csv_header() << '\n';
  for (const std::string& r : rows) csv << r << '\n';
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out);
    f << csv.str();
  }
  return 0;
}

int cmd_analyze(const std::string& scenario,
                const std::vector<std::string>& overrides,
                std::optional<std::uint64_t> seed) {
  const ScenarioConfig cfg = load_with(scenario, overrides, seed);
  const OperationalBounds bounds = compute_bounds(cfg);
  std::printf("stations:\n");
  for (const StationDemand& s : bounds.stations) {
    std::printf("  %-10s demand %12.1f us  x%-3u  capacity %10.2f req/s\n",
                s.station.c_str(), s.demand_us, s.servers, s.capacity_rps());
  }
  std::printf("X_max  %12.2f req/s  (bottleneck: %s)\n", bounds.x_max_rps,
              bounds.bottleneck.c_str());
  std::printf("R_zero %12.1f us\n", bounds.r_zero_us);
  std::printf("R_lower(C=%u) %7.1f us\n", cfg.workload.concurrency,
              bounds.r_lower_us(cfg.workload.concurrency));

  const RunReport rep = simulate(cfg);
  const ValidationResult v =
      validate_sim(rep, bounds, cfg.workload.concurrency);
  std::printf("\nsimulated X %10.2f req/s, R %10.0f us\n", rep.throughput_rps,
              rep.latency_mean_us);
  if (v.eviction_exempt) {
    std::printf("note: eviction regime, throughput bounds exempt\n");
  }
  for (const ValidationCheck& c : v.checks) {
    std::printf("  %-28s %12.4f vs %12.4f  %s\n", c.name.c_str(), c.value,
                c.limit, c.ok ? "ok" : "FAIL");
  }
  std::printf("%s\n", v.pass ? "PASS" : "FAIL");
  return v.pass ? 0 : 1;
}

int cmd_calibrate(const std::string& set, const std::string& out) {
  const Calibration cal = calibrate(set);
  bool all = true;
  std::printf("target set: %s\n", cal.set.c_str());
  for (const CalibrationTarget& t : cal.targets) {
    std::printf("  %-34s target %10.4f achieved %10.4f (+/- %.4f) %s\n",
                t.name.c_str(), t.target, t.achieved, t.tolerance,
                t.met() ? "ok" : "MISSED");
    all = all && t.met();
  }
  if (!out.empty()) {
    std::ofstream f(out);
    f << emit_scenario(cal.scenario).dump(2) << '\n';
    std::printf("fragment written to %s\n", out.c_str());
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic simulator of GPU-batched DNN inference servers"};
  app.require_subcommand(1);

  std::string scenario, out, trace_path, param, target_set;
  std::vector<std::string> overrides, values;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool need_scenario = true) {
    auto* s = cmd->add_option("--scenario", scenario, "scenario JSON file");
    if (need_scenario) s->required();
    cmd->add_option("--override", overrides,
                    "dotted-path override KEY=VALUE (repeatable)");
    cmd->add_option("--seed", seed, "override the scenario seed");
  };

  auto* run = app.add_subcommand("run", "simulate one scenario");
  add_common(run);
  run->add_option("--out", out, "write a CSV report");
  run->add_option("--trace", trace_path, "write per-request JSON Lines trace");

  auto* sweep = app.add_subcommand("sweep", "simulate a parameter sweep");
  add_common(sweep);
  sweep->add_option("--param", param, "dotted config path to sweep")->required();
  sweep->add_option("--values", values, "values for the swept parameter")
      ->required()
      ->delimiter(',');
  sweep->add_option("--out", out, "CSV output path (default: stdout)");

  auto* analyze = app.add_subcommand("analyze", "operational bounds + validation");
  add_common(analyze);

  auto* cal = app.add_subcommand("calibrate", "fit a built-in target set");
  cal->add_option("set", target_set,
                  "zero_load_shares | isolation_ratio | broker_set")
      ->required();
  cal->add_option("--out", out, "write the fitted scenario fragment");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario, overrides, seed, out, trace_path);
    if (sweep->parsed()) return cmd_sweep(scenario, overrides, seed, param, values, out);
    if (analyze->parsed()) return cmd_analyze(scenario, overrides, seed);
    if (cal->parsed()) return cmd_calibrate(target_set, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
