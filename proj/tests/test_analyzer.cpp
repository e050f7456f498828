#include <doctest.h>

#include <algorithm>

#include "servesim/analyzer.hpp"
#include "servesim/rng.hpp"

using namespace servesim;

namespace {

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
  cfg.workload.concurrency = 1;
  cfg.workload.total_requests = 2000;
  return cfg;
}

}  // namespace

TEST_CASE("bottleneck law over explicit stations") {
  SUBCASE("single station") {
    const auto b = bounds_from_stations({{"gpu", 10000, 1}}, 10000);
    CHECK(b.x_max_rps == doctest::Approx(100));
    CHECK(b.r_zero_us == 10000);
    CHECK(b.bottleneck == "gpu");
  }
  SUBCASE("pipelined stations: slowest wins, latencies add") {
    const auto b =
        bounds_from_stations({{"cpu_prep", 5000, 1}, {"gpu", 10000, 1}}, 15000);
    CHECK(b.x_max_rps == doctest::Approx(100));
    CHECK(b.r_zero_us == 15000);
    CHECK(b.bottleneck == "gpu");
  }
  SUBCASE("R_lower is nondecreasing in C") {
    const auto b = bounds_from_stations({{"gpu", 10000, 1}}, 10000);
    CHECK(b.r_lower_us(1) == doctest::Approx(10000));
    CHECK(b.r_lower_us(2) == doctest::Approx(20000));
    CHECK(b.r_lower_us(10) >= b.r_lower_us(9));
  }
}

TEST_CASE("batched stations use best-case amortized demand") {
  ScenarioConfig cfg = serial_scenario();
  cfg.mode = RunMode::InferenceOnly;
  cfg.model.alpha_us = 2000;
  cfg.model.beta_us = 500;
  const auto b = compute_bounds(cfg);
  const auto gpu = std::find_if(b.stations.begin(), b.stations.end(),
                                [](const StationDemand& s) { return s.station == "gpu"; });
  REQUIRE(gpu != b.stations.end());
  CHECK(gpu->demand_us == doctest::Approx(750));  // 2000/8 + 500
  CHECK(gpu->capacity_rps() == doctest::Approx(1333.333).epsilon(0.001));
}

TEST_CASE("compute_bounds matches the deterministic serial path") {
  const auto b = compute_bounds(serial_scenario());
  CHECK(b.r_zero_us == doctest::Approx(5150));
  const RunReport rep = run_pipeline(serial_scenario());
  CHECK(rep.throughput_rps == doctest::Approx(1e6 / 5150.0));
  const ValidationResult v = validate_sim(rep, b, 1);
  CHECK(v.pass);
  CHECK_FALSE(v.eviction_exempt);
}

TEST_CASE("bounds are independent of station order") {
  std::vector<StationDemand> st{{"cpu_prep", 4000, 2}, {"link", 500, 1}, {"gpu", 3000, 1}};
  const auto a = bounds_from_stations(st, 7500);
  std::reverse(st.begin(), st.end());
  const auto b = bounds_from_stations(st, 7500);
  CHECK(a.x_max_rps == b.x_max_rps);
  CHECK(a.bottleneck == b.bottleneck);
  CHECK(a.r_zero_us == b.r_zero_us);
}

TEST_CASE("randomized pipelines respect the bottleneck bound") {
  RngStream rng(2024, "pipelines");
  for (int trial = 0; trial < 5; ++trial) {
    ScenarioConfig cfg;
    cfg.seed = 100 + trial;
    cfg.placement = PrepPlacement::CpuPool;
    cfg.cpu_prep = {static_cast<double>(rng.next_range(2000, 20000)), 0, 0};
    cfg.resources.cpu_prep_processes = static_cast<std::uint32_t>(rng.next_range(1, 4));
    cfg.model.alpha_us = static_cast<double>(rng.next_range(500, 4000));
    cfg.model.beta_us = static_cast<double>(rng.next_range(500, 4000));
    cfg.resources.link = {10, static_cast<double>(rng.next_range(2000, 20000))};
    const std::uint32_t B = static_cast<std::uint32_t>(rng.next_range(2, 16));
    cfg.batcher = {B, 50 * (static_cast<std::uint64_t>(cfg.model.alpha_us) +
                            B * static_cast<std::uint64_t>(cfg.model.beta_us)),
                   false};
    const auto b = compute_bounds(cfg);
    // enough in flight to saturate the bottleneck even while the batcher
    // holds up to B-1 items per queue
    cfg.workload.concurrency = static_cast<std::uint32_t>(
        4 * B + std::max(8.0, 4.2 * b.knee_concurrency()));
    cfg.workload.warm_up = 5ULL * cfg.workload.concurrency;
    cfg.workload.total_requests = cfg.workload.warm_up_count() + 4000;
    const RunReport rep = run_pipeline(cfg);
    CAPTURE(trial);
    CHECK(rep.throughput_rps <= b.x_max_rps * 1.01);
    CHECK(rep.throughput_rps >= b.x_max_rps * 0.95);
    const ValidationResult v = validate_sim(rep, b, cfg.workload.concurrency);
    CHECK(v.pass);
  }
}

TEST_CASE("calibrate: zero-load share targets solve in closed form") {
  const Calibration cal = calibrate("zero_load_shares");
  REQUIRE(cal.targets.size() == 4);
  for (const CalibrationTarget& t : cal.targets) {
    CAPTURE(t.name);
    CHECK(t.met());
  }
  // the documented prep times at the 10 ms inference normalization
  const ImageClass medium[] = {medium_image()};
  const ImageClass large[] = {large_image()};
  CHECK(prep_service_time(cal.scenario.cpu_prep, PrepPlacement::CpuPool, medium) ==
        doctest::Approx(12727).epsilon(0.001));
  CHECK(prep_service_time(cal.scenario.gpu_prep, PrepPlacement::GpuStreams, medium) ==
        doctest::Approx(9608).epsilon(0.001));
  CHECK(prep_service_time(cal.scenario.cpu_prep, PrepPlacement::CpuPool, large) ==
        doctest::Approx(323333).epsilon(0.001));
  CHECK(prep_service_time(cal.scenario.gpu_prep, PrepPlacement::GpuStreams, large) ==
        doctest::Approx(73333).epsilon(0.001));
}

TEST_CASE("calibrate: isolation ratio bisection hits 19.5%") {
  const Calibration cal = calibrate("isolation_ratio");
  REQUIRE(cal.targets.size() == 1);
  CHECK(cal.targets[0].achieved == doctest::Approx(0.195).epsilon(0.001));
}

TEST_CASE("calibrate: broker set meets every published ratio") {
  const Calibration cal = calibrate("broker_set");
  REQUIRE(cal.targets.size() == 5);
  for (const CalibrationTarget& t : cal.targets) {
    CAPTURE(t.name);
    CAPTURE(t.achieved);
    CHECK(t.met());
  }
}

TEST_CASE("calibrate: unknown set lists the available ones") {
  CHECK_THROWS_WITH_AS(calibrate("nope"),
                       "calibrate: unknown target set 'nope' (available: "
                       "zero_load_shares, isolation_ratio, broker_set)",
                       std::invalid_argument);
}

TEST_CASE("config_search basics") {
  ScenarioConfig base = serial_scenario();
  base.workload.total_requests = 500;

  SUBCASE("grid of one point returns that point") {
    SearchSpace space;
    space.concurrency = {4};
    const SearchResult r = config_search(base, space, 1000000, 7, 500);
    REQUIRE(r.best.has_value());
    CHECK(r.best->concurrency == 4);
    CHECK(r.frontier.size() == 1);
  }
  SUBCASE("points violating the p99 bound are excluded") {
    SearchSpace space;
    space.concurrency = {1, 64};  // C=64 queues far past the bound
    const SearchResult r = config_search(base, space, 8000, 7, 500);
    REQUIRE(r.best.has_value());
    CHECK(r.best->concurrency == 1);
    CHECK(r.frontier.size() == 2);
    CHECK_FALSE(r.frontier[1].feasible);
  }
  SUBCASE("empty feasible set is reported, not fatal") {
    SearchSpace space;
    space.concurrency = {64};
    const SearchResult r = config_search(base, space, 100, 7, 500);
    CHECK_FALSE(r.best.has_value());
    CHECK(r.frontier.size() == 1);
  }
  SUBCASE("batching amortization beats the unbatched baseline") {
    ScenarioConfig vit = serial_scenario();
    vit.model.alpha_us = 2000;
    vit.model.beta_us = 1000;
    vit.cpu_prep = {200, 0, 0};
    vit.resources.cpu_prep_processes = 32;
    vit.batcher.max_delay_us = 200000;
    SearchSpace space;
    space.max_batch = {1, 8, 32};
    space.inference_instances = {1, 2};
    space.concurrency = {64};
    const SearchResult r = config_search(vit, space, UINT64_MAX, 7, 1500);
    REQUIRE(r.best.has_value());
    const auto baseline = std::find_if(
        r.frontier.begin(), r.frontier.end(), [](const SearchPoint& p) {
          return p.max_batch == 1 && p.inference_instances == 1;
        });
    REQUIRE(baseline != r.frontier.end());
    CHECK(r.best->report.throughput_rps > baseline->report.throughput_rps);
    CHECK(r.best->max_batch > 1);
  }
  SUBCASE("fixed seed makes the search deterministic") {
    SearchSpace space;
    space.max_batch = {1, 4};
    space.concurrency = {8};
    const SearchResult a = config_search(base, space, UINT64_MAX, 7, 500);
    const SearchResult b = config_search(base, space, UINT64_MAX, 7, 500);
    REQUIRE(a.best.has_value());
    REQUIRE(b.best.has_value());
    CHECK(a.best->key() == b.best->key());
    CHECK(a.best->report.throughput_rps == b.best->report.throughput_rps);
  }
}

TEST_CASE("two-stage scenarios have no station model") {
  ScenarioConfig cfg = serial_scenario();
  TwoStageSpec ts;
  ts.stage2 = {100, 10, 0, 1};
  cfg.two_stage = ts;
  CHECK_THROWS_AS(compute_bounds(cfg), ConfigError);
}
