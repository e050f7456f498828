#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "servesim/metrics.hpp"

namespace servesim {

inline const char* csv_header() {
  return "scenario_hash,seed,param,value,throughput_rps,lat_mean_us,"
         "lat_p50_us,lat_p99_us,share_prep,share_queue,share_transfer,"
         "share_inference,share_broker,share_reload,energy_cpu_j,"
         "energy_gpu_j,completions";
}

/// One plot-ready row; `param`/`value` identify the sweep point ("" for a
/// single run). Fixed precision keeps equal-seed reruns byte-identical.
inline std::string csv_row(const RunReport& rep, const std::string& param = "",
                           const std::string& value = "") {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%llu,%s,%s,%.6f,%.3f,%llu,%llu,%.6f,%.6f,%.6f,%.6f,%.6f,"
                "%.6f,%.6f,%.6f,%llu",
                rep.scenario_hash.c_str(),
                static_cast<unsigned long long>(rep.seed), param.c_str(),
                value.c_str(), rep.throughput_rps, rep.latency_mean_us,
                static_cast<unsigned long long>(rep.latency_p50_us),
                static_cast<unsigned long long>(rep.latency_p99_us),
                rep.share_prep(), rep.share_queue(), rep.share_transfer(),
                rep.share_inference(), rep.share_broker(), rep.share_reload(),
                rep.energy_cpu_j(), rep.energy_gpu_j(),
                static_cast<unsigned long long>(rep.completions));
  return buf;
}

/// JSON Lines trace: one record per post-warm-up request.
inline void write_trace_jsonl(std::ostream& out,
                              const std::vector<TraceRecord>& trace) {
  for (const TraceRecord& r : trace) {
    nlohmann::json j;
    j["id"] = r.id;
    j["class"] = r.image_class;
    j["issued_at_us"] = r.issued_at;
    j["completed_at_us"] = r.completed_at;
    j["phases"] = {{"prep_queue", r.phases.prep_queue},
                   {"prep", r.phases.prep},
                   {"transfer_in", r.phases.transfer_in},
                   {"batch_queue", r.phases.batch_queue},
                   {"reload", r.phases.reload},
                   {"inference", r.phases.inference},
                   {"transfer_out", r.phases.transfer_out},
                   {"broker_publish", r.phases.broker_publish},
                   {"broker_wait", r.phases.broker_wait},
                   {"broker_consume", r.phases.broker_consume}};
    out << j.dump() << '\n';
  }
}

}  // namespace servesim
