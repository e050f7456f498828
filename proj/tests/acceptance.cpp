// Acceptance gate: one line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "servesim/servesim.hpp"

using namespace servesim;

namespace {

int failures = 0;

void report(int number, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d  %-22s %s  (%s)\n", number, name,
              pass ? "PASS" : "FAIL", detail.c_str());
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[256];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// 1. ten randomized 1e5-event workloads dispatch in (fire_at, seq) order
//    and repeat byte-identically
void criterion_determinism() {
  bool pass = true;
  auto run_once = [](std::uint64_t seed) {
    Engine eng;
    RngStream rng(seed, "acceptance-events");
    std::vector<std::pair<SimTime, std::uint64_t>> fired;
    fired.reserve(100000);
    for (std::uint64_t i = 0; i < 100000; ++i) {
      const SimTime t = rng.next_range(0, 50000);
      eng.schedule(t, [&fired, t, i] { fired.push_back({t, i}); });
    }
    eng.run();
    return fired;
  };
  for (std::uint64_t seed = 1; seed <= 10 && pass; ++seed) {
    const auto a = run_once(seed);
    if (a.size() != 100000) pass = false;
    for (std::size_t i = 1; i < a.size() && pass; ++i) {
      if (a[i - 1].first > a[i].first) pass = false;
      if (a[i - 1].first == a[i].first && a[i - 1].second >= a[i].second)
        pass = false;
    }
    if (pass && a != run_once(seed)) pass = false;
  }
  report(1, "determinism, ordering", pass, "10 x 1e5 events, replayed");
}

ScenarioConfig serial_scenario() {
  ScenarioConfig cfg;
  cfg.placement = PrepPlacement::CpuPool;
  cfg.cpu_prep = {2088, 0, 0};
  cfg.model.input_width = 100;
  cfg.model.input_height = 100;
  cfg.model.alpha_us = 500;
  cfg.model.beta_us = 2500;
  cfg.resources.link = {10, 3000};
  cfg.batcher = {8, 0, false};
  return cfg;
}

// 2. closed-loop Little's law at C in {1, 8, 64}, 1e5 completions each
void criterion_littles_law() {
  double worst = 0;
  for (std::uint32_t c : {1u, 8u, 64u}) {
    ScenarioConfig cfg = serial_scenario();
    cfg.workload.concurrency = c;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 100000;
    const RunReport rep = run_pipeline(cfg);
    worst = std::max(worst, std::abs(c - rep.mean_in_flight()) / c);
  }
  report(2, "little's law", worst <= 0.01, fmt("max residual %.5f", worst));
}

// 3. twenty seeded random three-station pipelines stay within
//    [0.95, 1.01] of the analyzer bottleneck bound
void criterion_bottleneck_oracle() {
  RngStream rng(2311, "acceptance-pipelines");
  double lo = 1e9, hi = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ScenarioConfig cfg;
    cfg.seed = 500 + trial;
    cfg.placement = PrepPlacement::CpuPool;
    cfg.cpu_prep = {static_cast<double>(rng.next_range(2000, 20000)), 0, 0};
    cfg.resources.cpu_prep_processes =
        static_cast<std::uint32_t>(rng.next_range(1, 4));
    cfg.model.alpha_us = static_cast<double>(rng.next_range(500, 4000));
    cfg.model.beta_us = static_cast<double>(rng.next_range(500, 4000));
    cfg.resources.link = {10, static_cast<double>(rng.next_range(2000, 20000))};
    const std::uint32_t B = static_cast<std::uint32_t>(rng.next_range(2, 16));
    cfg.batcher = {B, 50 * (static_cast<std::uint64_t>(cfg.model.alpha_us) +
                            B * static_cast<std::uint64_t>(cfg.model.beta_us)),
                   false};
    const OperationalBounds b = compute_bounds(cfg);
    cfg.workload.concurrency = static_cast<std::uint32_t>(
        4 * B + std::max(8.0, 4.2 * b.knee_concurrency()));
    cfg.workload.warm_up = 5ULL * cfg.workload.concurrency;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 4000;
    const RunReport rep = run_pipeline(cfg);
    const double frac = rep.throughput_rps / b.x_max_rps;
    lo = std::min(lo, frac);
    hi = std::max(hi, frac);
  }
  report(3, "bottleneck oracle", lo >= 0.95 && hi <= 1.01,
         fmt("X/X_max in [%.4f, %.4f]", lo, hi));
}

// 4. zero-load preprocessing shares 56/49/97/88% each within 1 pp,
//    measured from simulated C=1 runs of the calibrated profiles
void criterion_zero_load_shares() {
  const Calibration cal = calibrate("zero_load_shares");
  bool pass = true;
  std::string detail;
  const struct {
    PrepPlacement placement;
    const char* image;
    double target;
  } cases[] = {{PrepPlacement::CpuPool, "medium", 0.56},
               {PrepPlacement::GpuStreams, "medium", 0.49},
               {PrepPlacement::CpuPool, "large", 0.97},
               {PrepPlacement::GpuStreams, "large", 0.88}};
  for (const auto& c : cases) {
    ScenarioConfig cfg = cal.scenario;
    cfg.placement = c.placement;
    cfg.workload.mix.clear();
    cfg.workload.mix[c.image] = 1.0;
    cfg.workload.concurrency = 1;
    cfg.workload.warm_up = 50;
    cfg.workload.total_requests = 250;
    const RunReport rep = run_pipeline(cfg);
    if (std::abs(rep.share_prep() - c.target) > 0.01) pass = false;
    detail += fmt("%s%.3f", detail.empty() ? "" : "/", rep.share_prep());
  }
  report(4, "zero-load shares", pass, "prep shares " + detail);
}

ScenarioConfig medium_pool_scenario() {
  ScenarioConfig cfg = detail::zero_load_scenario();
  cfg.resources.cpu_prep_processes = 24;
  cfg.resources.num_gpus = 4;
  cfg.resources.inference_instances_per_gpu = 5;
  cfg.resources.gpu_prep_streams = 5;
  cfg.batcher = {1, 0, false};
  return cfg;
}

// 5. queue share rises monotonically through the published band over
//    C in {64..512}; at C=4096 GPU prep with finite memory declines
//    below its peak while the CPU twin holds within 2%
void criterion_queue_share_band() {
  ScenarioConfig band = medium_pool_scenario();
  bool monotone = true, in_band = true;
  double prev = -1, first = 0, last = 0;
  for (std::uint32_t c : {64u, 128u, 256u, 512u}) {
    ScenarioConfig cfg = band;
    cfg.workload.concurrency = c;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 3000;
    const double q = run_pipeline(cfg).share_queue();
    if (q < prev) monotone = false;
    prev = q;
    if (c == 64) first = q;
    if (c == 512) last = q;
  }
  if (first < 0.29 || first > 0.39 || last < 0.86 || last > 0.96)
    in_band = false;

  auto sweep = [](PrepPlacement pl) {
    ScenarioConfig base = medium_pool_scenario();
    base.resources.link = {10, 150};
    base.placement = pl;
    if (pl == PrepPlacement::GpuStreams)
      base.gpu_memory = {true, 256ULL * base.model.bytes_per_input()};
    double peak = 0, at4096 = 0;
    for (std::uint32_t c : {64u, 128u, 256u, 512u, 4096u}) {
      ScenarioConfig cfg = base;
      cfg.workload.concurrency = c;
      // windows cover whole closed-loop cycles at extreme concurrency
      cfg.workload.total_requests =
          cfg.workload.warm_up_count() + std::max<std::uint64_t>(3000, 2ULL * c);
      const double x = run_pipeline(cfg).throughput_rps;
      if (c <= 512) peak = std::max(peak, x);
      else at4096 = x;
    }
    return std::make_pair(peak, at4096);
  };
  const auto [gpeak, g4096] = sweep(PrepPlacement::GpuStreams);
  const auto [cpeak, c4096] = sweep(PrepPlacement::CpuPool);
  const bool decline = g4096 < gpeak && c4096 >= 0.98 * cpeak;
  report(5, "queue-share band", monotone && in_band && decline,
         fmt("share %.3f..%.3f, gpu 4096/peak %.3f, cpu %.3f", first, last,
             g4096 / gpeak, c4096 / cpeak));
}

// 6. end-to-end over inference-only throughput hits the calibrated
//    isolation ratio; a transfer-bound profile inverts the comparison
void criterion_isolation_ratio() {
  const Calibration cal = calibrate("isolation_ratio");
  const RunReport e2e = run_pipeline(cal.scenario);
  const RunReport inf = run_isolated(cal.scenario, RunMode::InferenceOnly);
  const double ratio = e2e.throughput_rps / inf.throughput_rps;

  ScenarioConfig tiny;
  tiny.placement = PrepPlacement::GpuStreams;
  tiny.gpu_prep = {50, 0, 0};
  tiny.model.alpha_us = 50;
  tiny.model.beta_us = 50;
  tiny.resources.link = {10, 500};  // decoded inputs dwarf compressed ones
  tiny.batcher = {8, 1000, false};
  tiny.workload.concurrency = 32;
  tiny.workload.total_requests = tiny.workload.warm_up_count() + 3000;
  const RunReport te = run_pipeline(tiny);
  const RunReport ti = run_isolated(tiny, RunMode::InferenceOnly);
  const bool inverted = te.throughput_rps > ti.throughput_rps;
  report(6, "isolation ratio", std::abs(ratio - 0.195) <= 0.02 && inverted,
         fmt("ratio %.4f, transfer-bound %.0f > %.0f rps", ratio,
             te.throughput_rps, ti.throughput_rps));
}

// 7. four GPUs scale medium-image throughput >= 3.6x under both
//    placements; large-image CPU prep pins the ratio near 1
void criterion_multi_gpu() {
  auto run_gpus = [](PrepPlacement pl, const char* img, std::uint32_t procs,
                     std::uint32_t gpus, std::uint32_t conc) {
    ScenarioConfig cfg = detail::zero_load_scenario();
    cfg.placement = pl;
    cfg.workload.mix.clear();
    cfg.workload.mix[img] = 1.0;
    cfg.resources.cpu_prep_processes = procs;
    cfg.resources.gpu_prep_streams = 4;
    cfg.resources.inference_instances_per_gpu = 4;
    cfg.resources.num_gpus = gpus;
    cfg.batcher = {1, 0, false};
    cfg.workload.concurrency = conc;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 2000;
    return run_pipeline(cfg).throughput_rps;
  };
  const double cpu = run_gpus(PrepPlacement::CpuPool, "medium", 32, 4, 192) /
                     run_gpus(PrepPlacement::CpuPool, "medium", 32, 1, 48);
  const double gpu = run_gpus(PrepPlacement::GpuStreams, "medium", 32, 4, 192) /
                     run_gpus(PrepPlacement::GpuStreams, "medium", 32, 1, 48);
  const double large = run_gpus(PrepPlacement::CpuPool, "large", 8, 4, 40) /
                       run_gpus(PrepPlacement::CpuPool, "large", 8, 1, 40);
  report(7, "multi-gpu scaling", cpu >= 3.6 && gpu >= 3.6 && large <= 1.1,
         fmt("medium %.2fx/%.2fx, large %.2fx", cpu, gpu, large));
}

// 8. one calibrated two-stage parameter set meets every broker target
void criterion_broker_set() {
  const Calibration cal = calibrate("broker_set");
  bool pass = true;
  std::string detail;
  for (const CalibrationTarget& t : cal.targets) {
    if (!t.met()) pass = false;
    detail += fmt("%s%.3f", detail.empty() ? "" : "/", t.achieved);
  }
  report(8, "broker set", pass, "achieved " + detail);
}

// 9. calibrated energy model orderings per image class
void criterion_energy() {
  auto run_e = [](PrepPlacement pl, const char* img) {
    ScenarioConfig cfg = detail::zero_load_scenario();
    cfg.placement = pl;
    cfg.workload.mix.clear();
    cfg.workload.mix[img] = 1.0;
    cfg.resources.cpu_prep_processes = 1;
    cfg.resources.gpu_prep_streams = 8;
    cfg.resources.inference_instances_per_gpu = 8;
    cfg.batcher = {1, 0, false};
    cfg.workload.concurrency = 32;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 1500;
    return run_pipeline(cfg);
  };
  bool pass = true;
  double gpu_cpu_j[2][3];  // [placement][class] CPU joules per image
  const char* imgs[] = {"small", "medium", "large"};
  for (int i = 0; i < 3; ++i) {
    const RunReport g = run_e(PrepPlacement::GpuStreams, imgs[i]);
    const RunReport c = run_e(PrepPlacement::CpuPool, imgs[i]);
    // total energy per image lower with GPU preprocessing
    if (g.energy_cpu_j() + g.energy_gpu_j() >=
        c.energy_cpu_j() + c.energy_gpu_j())
      pass = false;
    // GPU joules lower when the GPU does both stages than when split
    if (g.energy_gpu_j() >= c.energy_gpu_j()) pass = false;
    gpu_cpu_j[0][i] = g.energy_cpu_j();
    gpu_cpu_j[1][i] = c.energy_cpu_j();
  }
  // CPU joules per image strictly increase medium -> large, both placements
  if (gpu_cpu_j[0][2] <= gpu_cpu_j[0][1]) pass = false;
  if (gpu_cpu_j[1][2] <= gpu_cpu_j[1][1]) pass = false;
  report(9, "energy orderings", pass,
         fmt("cpu J/img medium %.2f/%.2f large %.2f/%.2f", gpu_cpu_j[0][1],
             gpu_cpu_j[1][1], gpu_cpu_j[0][2], gpu_cpu_j[1][2]));
}

// 10. batcher limits hold on a randomized trace; dynamic batching beats
//     full-batch dispatch on p99 at equal mean throughput
void criterion_batcher() {
  ScenarioConfig prop = serial_scenario();
  prop.cpu_prep = {500, 30, 0};
  prop.resources.cpu_prep_processes = 8;
  prop.jitter.service_frac = 0.4;
  prop.workload.mix = {{"small", 1.0}, {"medium", 2.0}, {"large", 0.02}};
  prop.batcher = {6, 700, false};
  prop.workload.concurrency = 48;
  prop.workload.total_requests = prop.workload.warm_up_count() + 5000;
  const RunReport pr = run_pipeline(prop);
  const bool limits =
      pr.max_batch_dispatched <= 6 && pr.max_batcher_wait_us <= 700;

  ScenarioConfig base;
  base.placement = PrepPlacement::CpuPool;
  base.cpu_prep = {500, 0, 0};
  base.resources.cpu_prep_processes = 1;  // shared bottleneck
  base.model.alpha_us = 800;
  base.model.beta_us = 200;
  base.resources.inference_instances_per_gpu = 2;
  base.jitter.service_frac = 0.5;
  base.workload.concurrency = 16;
  base.workload.total_requests = base.workload.warm_up_count() + 5000;
  ScenarioConfig dyn = base;
  dyn.batcher = {8, 1000, false};
  ScenarioConfig full = base;
  full.batcher = {8, 0, true};
  const RunReport rd = run_pipeline(dyn);
  const RunReport rf = run_pipeline(full);
  const double xr = rd.throughput_rps / rf.throughput_rps;
  const bool tail = rd.latency_p99_us < rf.latency_p99_us &&
                    xr > 0.95 && xr < 1.05;
  report(10, "batcher properties", limits && tail,
         fmt("p99 %llu < %llu at X ratio %.4f",
             static_cast<unsigned long long>(rd.latency_p99_us),
             static_cast<unsigned long long>(rf.latency_p99_us), xr));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_determinism();
  criterion_littles_law();
  criterion_bottleneck_oracle();
  criterion_zero_load_shares();
  criterion_queue_share_band();
  criterion_isolation_ratio();
  criterion_multi_gpu();
  criterion_broker_set();
  criterion_energy();
  criterion_batcher();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report(11, "runtime budget", secs < 120.0, fmt("%.2f s of 120 s", secs));
  return failures == 0 ? 0 : 1;
}
