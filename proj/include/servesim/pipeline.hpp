#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "servesim/batcher.hpp"
#include "servesim/costs.hpp"
#include "servesim/engine.hpp"
#include "servesim/gpu_memory.hpp"
#include "servesim/metrics.hpp"
#include "servesim/rng.hpp"
#include "servesim/types.hpp"
#include "servesim/validate.hpp"

namespace servesim {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Closed-loop simulation of the single-DNN serving path: exactly C
/// requests in flight, each completion immediately issuing the next.
/// CPU preprocessing is unbatched (one image per process); GPU
/// preprocessing batches through the dynamic batcher and contends with
/// inference for the same instance slots.
class PipelineSim {
 public:
  explicit PipelineSim(const ScenarioConfig& cfg)
      : cfg_(cfg),
        workload_rng_(cfg.seed, "workload"),
        service_rng_(cfg.seed, "service") {
    validate_scenario(cfg_);
    class_names_.reserve(cfg_.workload.mix.size());
    for (const auto& [name, w] : cfg_.workload.mix) {
      class_names_.push_back(name);
      class_weights_.push_back(w);
    }
    gpus_.reserve(cfg_.resources.num_gpus);
    for (std::uint32_t g = 0; g < cfg_.resources.num_gpus; ++g) {
      gpus_.push_back(std::make_unique<Gpu>(*this, g));
    }
    cpu_ledger_ = BusyLedger(cfg_.resources.cpu_prep_processes);
  }

  RunReport run(std::vector<TraceRecord>* trace_out = nullptr) {
    const std::uint64_t total = cfg_.workload.total_requests;
    const std::uint64_t warm = cfg_.workload.warm_up_count();
    trace_.reserve(total - warm);
    for (std::uint32_t i = 0; i < cfg_.workload.concurrency; ++i) issue();
    eng_.run();
    if (completions_ < total) {
      throw SimError("pipeline run ended before reaching total_requests");
    }
    std::vector<WindowedBusy> devices;
    devices.push_back({"cpu", cpu_busy_start_, cpu_busy_end_,
                       cfg_.resources.cpu_prep_processes, cfg_.energy.cpu});
    for (std::uint32_t g = 0; g < gpus_.size(); ++g) {
      devices.push_back({"gpu" + std::to_string(g), gpus_[g]->busy_start,
                         gpus_[g]->busy_end,
                         cfg_.resources.inference_instances_per_gpu,
                         cfg_.energy.gpu});
    }
    RunReport rep =
        finalize_report(trace_, devices, window_start_, window_end_, warm);
    rep.seed = cfg_.seed;
    rep.max_batcher_wait_us = max_batcher_wait_;
    rep.max_batch_dispatched = max_batch_dispatched_;
    rep.evictions = evictions_;
    rep.total_reload_us = total_reload_us_;
    if (trace_out) *trace_out = std::move(trace_);
    return rep;
  }

 private:
  struct Request {
    std::uint64_t id = 0;
    const ImageClass* image = nullptr;
    std::uint32_t gpu = 0;
    SimTime issued_at = 0;
    PhaseBreakdown phases;
    SimTime mark = 0;  // start of the phase currently in progress
  };

  struct Job {
    enum class Kind { Prep, Inference } kind = Kind::Inference;
    std::vector<std::uint64_t> members;
    std::uint64_t service_us = 0;
    std::uint32_t reloads_pending = 0;
    bool slot_acquired = false;
  };

  struct LinkJob {
    enum class Kind { In, Out, Reload } kind = Kind::In;
    std::uint64_t req = 0;
    std::uint64_t job_key = 0;  // Reload: the stalled inference job
    std::uint64_t bytes = 0;
  };

  struct Gpu {
    Gpu(PipelineSim& sim, std::uint32_t index) : owner(sim), id(index) {
      ledger = BusyLedger(sim.cfg_.resources.inference_instances_per_gpu);
      if (sim.cfg_.gpu_memory.enabled) {
        memory.emplace(sim.cfg_.gpu_memory.capacity_bytes);
      }
      prep_batcher = std::make_unique<BatchQueue>(
          sim.eng_, sim.cfg_.batcher,
          [this](std::vector<PendingItem>&& b) { owner.on_prep_batch(*this, std::move(b)); });
      inf_batcher = std::make_unique<BatchQueue>(
          sim.eng_, sim.cfg_.batcher,
          [this](std::vector<PendingItem>&& b) { owner.on_inf_batch(*this, std::move(b)); });
    }

    PipelineSim& owner;
    std::uint32_t id;
    std::deque<std::uint64_t> job_queue;  // keys into owner.jobs_
    std::unordered_map<std::uint64_t, Job> jobs;
    std::uint32_t free_slots_used = 0;
    std::uint32_t prep_running = 0;
    std::deque<LinkJob> link_queue;
    bool link_busy = false;
    std::optional<GpuMemory> memory;
    std::unique_ptr<BatchQueue> prep_batcher;
    std::unique_ptr<BatchQueue> inf_batcher;
    BusyLedger ledger{1};
    std::uint64_t busy_start = 0, busy_end = 0;
  };

  // ---- workload ----

  void issue() {
    Request r;
    r.id = ++next_id_;
    r.issued_at = eng_.now();
    r.mark = r.issued_at;
    std::size_t ci = 0;
    if (class_names_.size() > 1) ci = workload_rng_.next_categorical(class_weights_);
    r.image = &cfg_.images.at(class_names_[ci]);
    r.gpu = static_cast<std::uint32_t>((r.id - 1) % gpus_.size());
    requests_[r.id] = r;

    switch (cfg_.mode) {
      case RunMode::EndToEnd:
        if (cfg_.placement == PrepPlacement::CpuPool) {
          enqueue_cpu_prep(r.id);
        } else {
          start_transfer_in(r.id, r.image->compressed_bytes);
        }
        break;
      case RunMode::PrepOnly:
        if (cfg_.placement == PrepPlacement::CpuPool) {
          enqueue_cpu_prep(r.id);
        } else {
          start_transfer_in(r.id, r.image->compressed_bytes);
        }
        break;
      case RunMode::InferenceOnly:
        start_transfer_in(r.id, cfg_.model.bytes_per_input());
        break;
    }
  }

  void complete(std::uint64_t id) {
    Request& r = requests_.at(id);
    ++completions_;
    const std::uint64_t warm = cfg_.workload.warm_up_count();
    if (completions_ == warm) {
      window_start_ = eng_.now();
      sample_busy(/*at_start=*/true);
    }
    if (completions_ > warm && completions_ <= cfg_.workload.total_requests) {
      TraceRecord t;
      t.id = r.id;
      t.image_class = r.image->name;
      t.issued_at = r.issued_at;
      t.completed_at = eng_.now();
      t.phases = r.phases;
      if (t.phases.sum() != t.latency()) {
        throw SimError("request breakdown does not tile its latency");
      }
      total_reload_us_ += t.phases.reload;
      trace_.push_back(std::move(t));
    }
    requests_.erase(id);
    if (completions_ == cfg_.workload.total_requests) {
      window_end_ = eng_.now();
      sample_busy(/*at_start=*/false);
      eng_.request_stop();
      return;
    }
    issue();
  }

  void sample_busy(bool at_start) {
    const SimTime now = eng_.now();
    if (at_start) {
      cpu_busy_start_ = cpu_ledger_.busy_at(now);
      for (auto& g : gpus_) g->busy_start = g->ledger.busy_at(now);
    } else {
      cpu_busy_end_ = cpu_ledger_.busy_at(now);
      for (auto& g : gpus_) g->busy_end = g->ledger.busy_at(now);
    }
  }

  // ---- CPU preprocessing pool ----

  void enqueue_cpu_prep(std::uint64_t id) {
    cpu_queue_.push_back(id);
    pump_cpu();
  }

  void pump_cpu() {
    while (cpu_busy_ < cfg_.resources.cpu_prep_processes && !cpu_queue_.empty()) {
      const std::uint64_t id = cpu_queue_.front();
      cpu_queue_.pop_front();
      Request& r = requests_.at(id);
      r.phases.prep_queue += eng_.now() - r.mark;
      r.mark = eng_.now();
      ++cpu_busy_;
      cpu_ledger_.start(id, eng_.now());
      const ImageClass img = *r.image;
      const std::uint64_t base =
          prep_service_time(cfg_.cpu_prep, PrepPlacement::CpuPool,
                            std::span<const ImageClass>(&img, 1));
      const std::uint64_t dur = jitter(base);
      eng_.schedule(eng_.now() + dur, [this, id] { on_cpu_prep_done(id); });
    }
  }

  void on_cpu_prep_done(std::uint64_t id) {
    cpu_ledger_.stop(id, eng_.now());
    --cpu_busy_;
    Request& r = requests_.at(id);
    r.phases.prep += eng_.now() - r.mark;
    r.mark = eng_.now();
    if (cfg_.mode == RunMode::PrepOnly) {
      complete(id);
    } else {
      start_transfer_in(id, cfg_.model.bytes_per_input());
    }
    pump_cpu();
  }

  // ---- host<->device link (one FIFO server per GPU) ----

  void start_transfer_in(std::uint64_t id, std::uint64_t bytes) {
    Request& r = requests_.at(id);
    enqueue_link(*gpus_[r.gpu], LinkJob{LinkJob::Kind::In, id, 0, bytes});
  }

  void enqueue_link(Gpu& g, LinkJob job) {
    g.link_queue.push_back(job);
    pump_link(g);
  }

  void pump_link(Gpu& g) {
    if (g.link_busy || g.link_queue.empty()) return;
    const LinkJob job = g.link_queue.front();
    g.link_queue.pop_front();
    g.link_busy = true;
    const std::uint64_t dur = transfer_time(job.bytes, cfg_.resources.link);
    eng_.schedule(eng_.now() + dur, [this, &g, job] {
      g.link_busy = false;
      on_link_done(g, job);
      pump_link(g);
    });
  }

  void on_link_done(Gpu& g, const LinkJob& job) {
    switch (job.kind) {
      case LinkJob::Kind::In: {
        Request& r = requests_.at(job.req);
        r.phases.transfer_in += eng_.now() - r.mark;
        r.mark = eng_.now();
        if (cfg_.mode == RunMode::InferenceOnly ||
            cfg_.placement == PrepPlacement::CpuPool) {
          g.inf_batcher->add(job.req);
        } else {
          g.prep_batcher->add(job.req);
        }
        break;
      }
      case LinkJob::Kind::Out: {
        Request& r = requests_.at(job.req);
        r.phases.transfer_out += eng_.now() - r.mark;
        complete(job.req);
        break;
      }
      case LinkJob::Kind::Reload: {
        Job& j = g.jobs.at(job.job_key);
        if (g.memory) {
          auto res =
              g.memory->reload(job.req, cfg_.model.bytes_per_input(), eng_.now());
          evictions_ += res.evicted.size();
        }
        if (--j.reloads_pending == 0 && j.slot_acquired) {
          begin_service(g, job.job_key);
        }
        break;
      }
    }
  }

  // ---- GPU device: prep batches and inference batches share slots ----

  void on_prep_batch(Gpu& g, std::vector<PendingItem>&& batch) {
    note_dispatch(batch);
    Job j;
    j.kind = Job::Kind::Prep;
    std::vector<ImageClass> imgs;
    for (const PendingItem& it : batch) {
      j.members.push_back(it.id);
      imgs.push_back(*requests_.at(it.id).image);
    }
    j.service_us = jitter(prep_service_time(
        cfg_.gpu_prep, PrepPlacement::GpuStreams,
        std::span<const ImageClass>(imgs.data(), imgs.size())));
    push_job(g, std::move(j));
  }

  void on_inf_batch(Gpu& g, std::vector<PendingItem>&& batch) {
    note_dispatch(batch);
    Job j;
    j.kind = Job::Kind::Inference;
    j.service_us = jitter(inference_batch_time(
        cfg_.model, static_cast<std::uint32_t>(batch.size())));
    for (const PendingItem& it : batch) j.members.push_back(it.id);
    push_job(g, std::move(j));
  }

  void note_dispatch(const std::vector<PendingItem>& batch) {
    max_batch_dispatched_ = std::max(
        max_batch_dispatched_, static_cast<std::uint32_t>(batch.size()));
    for (const PendingItem& it : batch) {
      max_batcher_wait_ = std::max(max_batcher_wait_, eng_.now() - it.enqueued_at);
    }
  }

  void push_job(Gpu& g, Job&& job) {
    const std::uint64_t key = ++next_job_key_;
    g.jobs.emplace(key, std::move(job));
    g.job_queue.push_back(key);
    pump_gpu(g);
  }

  void pump_gpu(Gpu& g) {
    const std::uint32_t slots = cfg_.resources.inference_instances_per_gpu;
    while (g.free_slots_used < slots && !g.job_queue.empty()) {
      const std::uint64_t key = g.job_queue.front();
      Job& j = g.jobs.at(key);
      if (j.kind == Job::Kind::Prep &&
          g.prep_running >= cfg_.resources.gpu_prep_streams) {
        break;  // stream cap; later jobs wait their turn (FIFO by ready time)
      }
      g.job_queue.pop_front();
      ++g.free_slots_used;
      if (j.kind == Job::Kind::Prep) ++g.prep_running;
      j.slot_acquired = true;
      // close the queueing phase for every member
      for (std::uint64_t id : j.members) {
        Request& r = requests_.at(id);
        if (j.kind == Job::Kind::Prep) {
          r.phases.prep_queue += eng_.now() - r.mark;
        } else {
          r.phases.batch_queue += eng_.now() - r.mark;
        }
        r.mark = eng_.now();
      }
      // members stay evictable while the batch waits for a slot; any
      // that were displaced must be reloaded before the batch can run
      if (j.kind == Job::Kind::Inference && g.memory) {
        for (std::uint64_t id : j.members) {
          if (g.memory->is_evicted(id)) {
            ++j.reloads_pending;
            enqueue_link(g, LinkJob{LinkJob::Kind::Reload, id, key,
                                    cfg_.model.bytes_per_input()});
          } else {
            g.memory->pin(id);
          }
        }
      }
      if (j.reloads_pending == 0) {
        begin_service(g, key);
      }
      // else: the slot stalls until the pending reloads finish
    }
  }

  void begin_service(Gpu& g, std::uint64_t key) {
    Job& j = g.jobs.at(key);
    for (std::uint64_t id : j.members) {
      Request& r = requests_.at(id);
      if (j.kind == Job::Kind::Inference) {
        r.phases.reload += eng_.now() - r.mark;  // zero when nothing reloaded
        r.mark = eng_.now();
      }
    }
    g.ledger.start(key, eng_.now());
    eng_.schedule(eng_.now() + j.service_us, [this, &g, key] { on_job_done(g, key); });
  }

  void on_job_done(Gpu& g, std::uint64_t key) {
    g.ledger.stop(key, eng_.now());
    Job job = std::move(g.jobs.at(key));
    g.jobs.erase(key);
    --g.free_slots_used;
    if (job.kind == Job::Kind::Prep) --g.prep_running;

    for (std::uint64_t id : job.members) {
      Request& r = requests_.at(id);
      if (job.kind == Job::Kind::Prep) {
        r.phases.prep += eng_.now() - r.mark;
        r.mark = eng_.now();
      } else {
        r.phases.inference += eng_.now() - r.mark;
        r.mark = eng_.now();
      }
    }
    if (job.kind == Job::Kind::Prep) {
      for (std::uint64_t id : job.members) {
        if (cfg_.mode == RunMode::PrepOnly) {
          complete(id);
          continue;
        }
        if (g.memory) {
          auto res = g.memory->admit(id, cfg_.model.bytes_per_input(), eng_.now());
          evictions_ += res.evicted.size();
        }
        g.inf_batcher->add(id);
      }
    } else {
      for (std::uint64_t id : job.members) {
        if (g.memory) g.memory->release(id);
        enqueue_link(g, LinkJob{LinkJob::Kind::Out, id, 0, cfg_.model.output_bytes});
      }
    }
    pump_gpu(g);
  }

  std::uint64_t jitter(std::uint64_t base_us) {
    const double j = cfg_.jitter.service_frac;
    if (j <= 0) return base_us;
    const double u = service_rng_.next_double() * 2.0 - 1.0;
    return round_half_up_us(static_cast<double>(base_us) * (1.0 + j * u));
  }

  ScenarioConfig cfg_;
  Engine eng_;
  RngStream workload_rng_;
  RngStream service_rng_;

  std::vector<std::string> class_names_;
  std::vector<double> class_weights_;

  std::unordered_map<std::uint64_t, Request> requests_;
  std::vector<std::unique_ptr<Gpu>> gpus_;
  std::deque<std::uint64_t> cpu_queue_;
  std::uint32_t cpu_busy_ = 0;
  BusyLedger cpu_ledger_{1};
  std::uint64_t cpu_busy_start_ = 0, cpu_busy_end_ = 0;

  std::uint64_t next_id_ = 0;
  std::uint64_t next_job_key_ = 0;
  std::uint64_t completions_ = 0;
  SimTime window_start_ = 0, window_end_ = 0;
  std::vector<TraceRecord> trace_;
  std::uint64_t max_batcher_wait_ = 0;
  std::uint32_t max_batch_dispatched_ = 0;
  std::uint64_t evictions_ = 0;
  std::uint64_t total_reload_us_ = 0;
};

inline RunReport run_pipeline(const ScenarioConfig& cfg,
                              std::vector<TraceRecord>* trace_out = nullptr) {
  PipelineSim sim(cfg);
  return sim.run(trace_out);
}

inline RunReport run_isolated(const ScenarioConfig& cfg, RunMode mode,
                              std::vector<TraceRecord>* trace_out = nullptr) {
  if (mode == RunMode::EndToEnd) {
    throw std::invalid_argument("run_isolated: mode must isolate one stage");
  }
  ScenarioConfig c = cfg;
  c.mode = mode;
  if (mode == RunMode::InferenceOnly) c.gpu_memory.enabled = false;
  return run_pipeline(c, trace_out);
}

}  // namespace servesim
