#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "servesim/rng.hpp"
#include "servesim/types.hpp"
#include "servesim/validate.hpp"

namespace servesim {

using json = nlohmann::json;

namespace detail {

/// Guard against silent typos: every object key must be claimed.
inline void reject_unknown(const json& obj, const std::string& path,
                           const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown field: " +
                        (path.empty() ? key : path + "." + key));
    }
  }
}

template <typename T>
void get_to(const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    obj.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

inline StageProfile parse_stage_profile(const json& j, const std::string& path) {
  reject_unknown(j, path, {"fixed_us", "per_byte_ns", "per_pixel_ns"});
  StageProfile p;
  get_to(j, path, "fixed_us", p.fixed_us);
  get_to(j, path, "per_byte_ns", p.per_byte_ns);
  get_to(j, path, "per_pixel_ns", p.per_pixel_ns);
  return p;
}

inline BatcherConfig parse_batcher(const json& j, const std::string& path) {
  reject_unknown(j, path, {"max_batch", "max_delay_us", "full_only"});
  BatcherConfig b;
  get_to(j, path, "max_batch", b.max_batch);
  get_to(j, path, "max_delay_us", b.max_delay_us);
  get_to(j, path, "full_only", b.full_only);
  return b;
}

inline DevicePower parse_power(const json& j, const std::string& path,
                               DevicePower def) {
  reject_unknown(j, path, {"idle_watts", "active_watts"});
  get_to(j, path, "idle_watts", def.idle_watts);
  get_to(j, path, "active_watts", def.active_watts);
  return def;
}

inline StagePool parse_stage_pool(const json& j, const std::string& path) {
  reject_unknown(j, path, {"alpha_us", "beta_us", "prep_us", "servers"});
  StagePool p;
  get_to(j, path, "alpha_us", p.alpha_us);
  get_to(j, path, "beta_us", p.beta_us);
  get_to(j, path, "prep_us", p.prep_us);
  get_to(j, path, "servers", p.servers);
  return p;
}

inline BrokerKind parse_broker_kind(const std::string& s, const std::string& path) {
  if (s == "memory_backed") return BrokerKind::MemoryBacked;
  if (s == "disk_backed") return BrokerKind::DiskBacked;
  if (s == "fused") return BrokerKind::Fused;
  throw ConfigError(path + ": unknown interconnect kind '" + s + "'");
}

}  // namespace detail

/// Parse a schema-v1 scenario document into a validated config. Unknown
/// fields are rejected with their full path; defaults fill every omitted
/// field.
inline ScenarioConfig parse_scenario(const json& root) {
  using detail::get_to;
  using detail::reject_unknown;
  ScenarioConfig cfg;
  reject_unknown(root, "",
                 {"schema", "seed", "workload", "resources", "prep", "model",
                  "batcher", "gpu_memory", "mode", "jitter", "energy", "images",
                  "interconnect"});
  get_to(root, "", "schema", cfg.schema);
  get_to(root, "", "seed", cfg.seed);

  if (root.contains("images")) {
    for (const auto& [name, jc] : root.at("images").items()) {
      const std::string path = "images." + name;
      reject_unknown(jc, path, {"compressed_bytes", "width", "height"});
      ImageClass img;
      img.name = name;
      if (cfg.images.count(name)) img = cfg.images.at(name);
      get_to(jc, path, "compressed_bytes", img.compressed_bytes);
      get_to(jc, path, "width", img.width);
      get_to(jc, path, "height", img.height);
      cfg.images[name] = img;
    }
  }
  if (root.contains("workload")) {
    const json& w = root.at("workload");
    reject_unknown(w, "workload",
                   {"image", "mix", "concurrency", "total_requests", "warm_up"});
    if (w.contains("image") && w.contains("mix")) {
      throw ConfigError("workload: give either 'image' or 'mix', not both");
    }
    if (w.contains("image")) {
      cfg.workload.mix.clear();
      cfg.workload.mix[w.at("image").get<std::string>()] = 1.0;
    } else if (w.contains("mix")) {
      cfg.workload.mix.clear();
      for (const auto& [name, p] : w.at("mix").items()) {
        cfg.workload.mix[name] = p.get<double>();
      }
    }
    get_to(w, "workload", "concurrency", cfg.workload.concurrency);
    get_to(w, "workload", "total_requests", cfg.workload.total_requests);
    if (w.contains("warm_up")) {
      cfg.workload.warm_up = w.at("warm_up").get<std::uint64_t>();
    }
  }
  if (root.contains("resources")) {
    const json& r = root.at("resources");
    reject_unknown(r, "resources",
                   {"cpu_prep_processes", "gpu_prep_streams",
                    "inference_instances_per_gpu", "num_gpus", "link"});
    get_to(r, "resources", "cpu_prep_processes", cfg.resources.cpu_prep_processes);
    get_to(r, "resources", "gpu_prep_streams", cfg.resources.gpu_prep_streams);
    get_to(r, "resources", "inference_instances_per_gpu",
           cfg.resources.inference_instances_per_gpu);
    get_to(r, "resources", "num_gpus", cfg.resources.num_gpus);
    if (r.contains("link")) {
      const json& l = r.at("link");
      reject_unknown(l, "resources.link", {"latency_us", "bandwidth_bytes_per_us"});
      get_to(l, "resources.link", "latency_us", cfg.resources.link.latency_us);
      get_to(l, "resources.link", "bandwidth_bytes_per_us",
             cfg.resources.link.bandwidth_bytes_per_us);
    }
  }
  if (root.contains("prep")) {
    const json& p = root.at("prep");
    reject_unknown(p, "prep", {"placement", "cpu", "gpu"});
    if (p.contains("placement")) {
      const std::string s = p.at("placement").get<std::string>();
      if (s == "cpu") cfg.placement = PrepPlacement::CpuPool;
      else if (s == "gpu") cfg.placement = PrepPlacement::GpuStreams;
      else throw ConfigError("prep.placement: must be 'cpu' or 'gpu'");
    }
    if (p.contains("cpu")) cfg.cpu_prep = detail::parse_stage_profile(p.at("cpu"), "prep.cpu");
    if (p.contains("gpu")) cfg.gpu_prep = detail::parse_stage_profile(p.at("gpu"), "prep.gpu");
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    reject_unknown(m, "model",
                   {"name", "input_width", "input_height", "alpha_us", "beta_us",
                    "output_bytes"});
    get_to(m, "model", "name", cfg.model.name);
    get_to(m, "model", "input_width", cfg.model.input_width);
    get_to(m, "model", "input_height", cfg.model.input_height);
    get_to(m, "model", "alpha_us", cfg.model.alpha_us);
    get_to(m, "model", "beta_us", cfg.model.beta_us);
    get_to(m, "model", "output_bytes", cfg.model.output_bytes);
  }
  if (root.contains("batcher")) {
    cfg.batcher = detail::parse_batcher(root.at("batcher"), "batcher");
  }
  if (root.contains("gpu_memory")) {
    const json& g = root.at("gpu_memory");
    reject_unknown(g, "gpu_memory", {"enabled", "capacity_bytes"});
    get_to(g, "gpu_memory", "enabled", cfg.gpu_memory.enabled);
    get_to(g, "gpu_memory", "capacity_bytes", cfg.gpu_memory.capacity_bytes);
  }
  if (root.contains("mode")) {
    const std::string s = root.at("mode").get<std::string>();
    if (s == "end_to_end") cfg.mode = RunMode::EndToEnd;
    else if (s == "prep_only") cfg.mode = RunMode::PrepOnly;
    else if (s == "inference_only") cfg.mode = RunMode::InferenceOnly;
    else throw ConfigError("mode: must be end_to_end, prep_only, or inference_only");
  }
  if (root.contains("jitter")) {
    const json& j = root.at("jitter");
    reject_unknown(j, "jitter", {"service_frac"});
    get_to(j, "jitter", "service_frac", cfg.jitter.service_frac);
  }
  if (root.contains("energy")) {
    const json& e = root.at("energy");
    reject_unknown(e, "energy", {"cpu", "gpu"});
    if (e.contains("cpu")) cfg.energy.cpu = detail::parse_power(e.at("cpu"), "energy.cpu", cfg.energy.cpu);
    if (e.contains("gpu")) cfg.energy.gpu = detail::parse_power(e.at("gpu"), "energy.gpu", cfg.energy.gpu);
  }
  if (root.contains("interconnect")) {
    const json& t = root.at("interconnect");
    reject_unknown(t, "interconnect",
                   {"kind", "stage1", "stage2", "stage2_batcher", "broker",
                    "fanout"});
    TwoStageSpec ts;
    if (t.contains("kind")) {
      ts.kind = detail::parse_broker_kind(t.at("kind").get<std::string>(),
                                          "interconnect.kind");
    }
    if (t.contains("stage1")) ts.stage1 = detail::parse_stage_pool(t.at("stage1"), "interconnect.stage1");
    if (t.contains("stage2")) ts.stage2 = detail::parse_stage_pool(t.at("stage2"), "interconnect.stage2");
    if (t.contains("stage2_batcher")) {
      ts.stage2_batcher =
          detail::parse_batcher(t.at("stage2_batcher"), "interconnect.stage2_batcher");
    }
    if (t.contains("broker")) {
      const json& b = t.at("broker");
      reject_unknown(b, "interconnect.broker",
                     {"publish_us", "consume_us", "per_byte_ns"});
      get_to(b, "interconnect.broker", "publish_us", ts.broker.publish_us);
      get_to(b, "interconnect.broker", "consume_us", ts.broker.consume_us);
      get_to(b, "interconnect.broker", "per_byte_ns", ts.broker.per_byte_ns);
    }
    if (t.contains("fanout")) {
      const json& f = t.at("fanout");
      reject_unknown(f, "interconnect.fanout",
                     {"fixed", "distribution", "face_message_bytes"});
      get_to(f, "interconnect.fanout", "fixed", ts.fanout.fixed);
      get_to(f, "interconnect.fanout", "face_message_bytes",
             ts.fanout.face_message_bytes);
      if (f.contains("distribution")) {
        for (const auto& [k, p] : f.at("distribution").items()) {
          ts.fanout.distribution[static_cast<std::uint32_t>(std::stoul(k))] =
              p.get<double>();
        }
      }
    }
    cfg.two_stage = ts;
  }
  validate_scenario(cfg);
  return cfg;
}

/// Canonical JSON form; keys sort deterministically, so the document is
/// stable for hashing and round-trips through parse_scenario unchanged.
inline json emit_scenario(const ScenarioConfig& cfg) {
  json root;
  root["schema"] = cfg.schema;
  root["seed"] = cfg.seed;
  json w;
  w["mix"] = json::object();
  for (const auto& [name, p] : cfg.workload.mix) w["mix"][name] = p;
  w["concurrency"] = cfg.workload.concurrency;
  w["total_requests"] = cfg.workload.total_requests;
  if (cfg.workload.warm_up) w["warm_up"] = *cfg.workload.warm_up;
  root["workload"] = w;
  root["resources"] = {
      {"cpu_prep_processes", cfg.resources.cpu_prep_processes},
      {"gpu_prep_streams", cfg.resources.gpu_prep_streams},
      {"inference_instances_per_gpu", cfg.resources.inference_instances_per_gpu},
      {"num_gpus", cfg.resources.num_gpus},
      {"link",
       {{"latency_us", cfg.resources.link.latency_us},
        {"bandwidth_bytes_per_us", cfg.resources.link.bandwidth_bytes_per_us}}}};
  auto profile = [](const StageProfile& p) {
    return json{{"fixed_us", p.fixed_us},
                {"per_byte_ns", p.per_byte_ns},
                {"per_pixel_ns", p.per_pixel_ns}};
  };
  root["prep"] = {
      {"placement", cfg.placement == PrepPlacement::CpuPool ? "cpu" : "gpu"},
      {"cpu", profile(cfg.cpu_prep)},
      {"gpu", profile(cfg.gpu_prep)}};
  root["model"] = {{"name", cfg.model.name},
                   {"input_width", cfg.model.input_width},
                   {"input_height", cfg.model.input_height},
                   {"alpha_us", cfg.model.alpha_us},
                   {"beta_us", cfg.model.beta_us},
                   {"output_bytes", cfg.model.output_bytes}};
  auto batcher = [](const BatcherConfig& b) {
    return json{{"max_batch", b.max_batch},
                {"max_delay_us", b.max_delay_us},
                {"full_only", b.full_only}};
  };
  root["batcher"] = batcher(cfg.batcher);
  root["gpu_memory"] = {{"enabled", cfg.gpu_memory.enabled},
                        {"capacity_bytes", cfg.gpu_memory.capacity_bytes}};
  root["mode"] = cfg.mode == RunMode::EndToEnd      ? "end_to_end"
                 : cfg.mode == RunMode::PrepOnly    ? "prep_only"
                                                    : "inference_only";
  root["jitter"] = {{"service_frac", cfg.jitter.service_frac}};
  root["energy"] = {{"cpu",
                     {{"idle_watts", cfg.energy.cpu.idle_watts},
                      {"active_watts", cfg.energy.cpu.active_watts}}},
                    {"gpu",
                     {{"idle_watts", cfg.energy.gpu.idle_watts},
                      {"active_watts", cfg.energy.gpu.active_watts}}}};
  json imgs = json::object();
  for (const auto& [name, img] : cfg.images) {
    imgs[name] = {{"compressed_bytes", img.compressed_bytes},
                  {"width", img.width},
                  {"height", img.height}};
  }
  root["images"] = imgs;
  if (cfg.two_stage) {
    const TwoStageSpec& ts = *cfg.two_stage;
    json t;
    t["kind"] = ts.kind == BrokerKind::MemoryBacked ? "memory_backed"
                : ts.kind == BrokerKind::DiskBacked ? "disk_backed"
                                                    : "fused";
    auto pool = [](const StagePool& p) {
      return json{{"alpha_us", p.alpha_us},
                  {"beta_us", p.beta_us},
                  {"prep_us", p.prep_us},
                  {"servers", p.servers}};
    };
    t["stage1"] = pool(ts.stage1);
    t["stage2"] = pool(ts.stage2);
    t["stage2_batcher"] = batcher(ts.stage2_batcher);
    t["broker"] = {{"publish_us", ts.broker.publish_us},
                   {"consume_us", ts.broker.consume_us},
                   {"per_byte_ns", ts.broker.per_byte_ns}};
    json f;
    f["fixed"] = ts.fanout.fixed;
    f["face_message_bytes"] = ts.fanout.face_message_bytes;
    json dist = json::object();
    for (const auto& [k, p] : ts.fanout.distribution) dist[std::to_string(k)] = p;
    f["distribution"] = dist;
    t["fanout"] = f;
    root["interconnect"] = t;
  }
  return root;
}

/// FNV-1a 64 over the canonical dump, hex-encoded: ties every CSV row to
/// the exact configuration that produced it.
inline std::string scenario_hash(const ScenarioConfig& cfg) {
  const std::uint64_t h = RngStream::fnv1a(emit_scenario(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Apply a dotted-path override ("workload.concurrency=256") to a scenario
/// document before parsing. Values parse as JSON when possible, otherwise
/// as strings.
inline void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must be KEY=VALUE: " + spec);
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError("override path crosses a scalar: " + path);
    }
    start = dot + 1;
  }
}

inline ScenarioConfig load_scenario(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(root, o);
  return parse_scenario(root);
}

}  // namespace servesim
