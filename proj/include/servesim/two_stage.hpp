#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "servesim/batcher.hpp"
#include "servesim/costs.hpp"
#include "servesim/engine.hpp"
#include "servesim/metrics.hpp"
#include "servesim/pipeline.hpp"
#include "servesim/rng.hpp"
#include "servesim/types.hpp"

namespace servesim {

struct FaceTask {
  std::uint64_t frame_id = 0;
  std::uint32_t index = 0;
};

inline std::uint32_t sample_fanout(const FanoutModel& fanout, RngStream& rng) {
  if (fanout.is_fixed()) return fanout.fixed;
  std::vector<std::uint32_t> counts;
  std::vector<double> weights;
  for (const auto& [k, w] : fanout.distribution) {
    counts.push_back(k);
    weights.push_back(w);
  }
  return counts[rng.next_categorical(weights)];
}

/// Fan a detected frame out into face tasks; each inherits the frame id
/// so the frame's latency is attributed to its last-finishing face.
inline std::vector<FaceTask> expand_frame(std::uint64_t frame_id,
                                          const FanoutModel& fanout,
                                          RngStream& rng) {
  const std::uint32_t k = sample_fanout(fanout, rng);
  std::vector<FaceTask> faces;
  faces.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) faces.push_back({frame_id, i});
  return faces;
}

inline std::uint64_t default_face_message_bytes() {
  return 224ULL * 224 * 3 * 4;  // identification model decoded input
}

/// Face detection -> identification pipeline with three interconnects.
/// Brokered variants run both stage pools concurrently and batch faces
/// across frames; Fused runs both stages serially per frame on one
/// instance, batching exactly the frame's own faces and paying no broker
/// cost.
class TwoStageSim {
 public:
  explicit TwoStageSim(const ScenarioConfig& cfg)
      : cfg_(cfg), fanout_rng_(cfg.seed, "fanout") {
    validate_scenario(cfg_);
    if (!cfg_.two_stage) {
      throw ConfigError("two_stage: scenario has no two_stage block");
    }
    spec_ = *cfg_.two_stage;
    if (spec_.kind != BrokerKind::Fused) {
      const std::uint64_t bytes = spec_.fanout.face_message_bytes
                                      ? spec_.fanout.face_message_bytes
                                      : default_face_message_bytes();
      delay_ = broker_delay(spec_.kind, bytes, spec_.broker);
      stage2_batcher_ = std::make_unique<BatchQueue>(
          eng_, spec_.stage2_batcher,
          [this](std::vector<PendingItem>&& b) { on_id_batch(std::move(b)); });
    }
    stage1_ledger_ = BusyLedger(spec_.stage1.servers);
    stage2_ledger_ = BusyLedger(spec_.stage2.servers);
  }

  RunReport run(std::vector<TraceRecord>* trace_out = nullptr) {
    const std::uint64_t total = cfg_.workload.total_requests;
    const std::uint64_t warm = cfg_.workload.warm_up_count();
    trace_.reserve(total - warm);
    for (std::uint32_t i = 0; i < cfg_.workload.concurrency; ++i) issue();
    eng_.run();
    if (completions_ < total) {
      throw SimError("two-stage run ended before reaching total_requests");
    }
    std::vector<WindowedBusy> devices;
    devices.push_back({"gpu_stage1", s1_busy_start_, s1_busy_end_,
                       spec_.stage1.servers, cfg_.energy.gpu});
    devices.push_back({"gpu_stage2", s2_busy_start_, s2_busy_end_,
                       spec_.stage2.servers, cfg_.energy.gpu});
    RunReport rep =
        finalize_report(trace_, devices, window_start_, window_end_, warm);
    rep.seed = cfg_.seed;
    rep.max_batcher_wait_us = max_batcher_wait_;
    rep.max_batch_dispatched = max_batch_dispatched_;
    if (trace_out) *trace_out = std::move(trace_);
    return rep;
  }

 private:
  struct Face {
    std::uint64_t frame = 0;
    PhaseBreakdown phases;  // segments from detection end onward
    SimTime mark = 0;
  };

  struct Frame {
    std::uint64_t id = 0;
    SimTime issued_at = 0;
    PhaseBreakdown det_phases;  // up to and including detection
    SimTime mark = 0;
    std::uint32_t faces_left = 0;
    SimTime last_face_done = 0;
    PhaseBreakdown last_face_phases;
  };

  void issue() {
    Frame f;
    f.id = ++next_frame_id_;
    f.issued_at = eng_.now();
    f.mark = f.issued_at;
    frames_[f.id] = f;
    stage1_queue_.push_back(f.id);
    pump_stage1();
  }

  void pump_stage1() {
    while (s1_busy_ < spec_.stage1.servers && !stage1_queue_.empty()) {
      const std::uint64_t id = stage1_queue_.front();
      stage1_queue_.pop_front();
      Frame& f = frames_.at(id);
      f.det_phases.prep_queue += eng_.now() - f.mark;
      f.mark = eng_.now();
      ++s1_busy_;
      stage1_ledger_.start(id, eng_.now());
      const std::uint64_t prep = round_half_up_us(spec_.stage1.prep_us);
      const std::uint64_t det =
          round_half_up_us(spec_.stage1.alpha_us + spec_.stage1.beta_us);
      std::uint64_t id_time = 0;
      std::uint32_t k = sample_fanout(spec_.fanout, fanout_rng_);
      if (spec_.kind == BrokerKind::Fused && k > 0) {
        // fused: identify the frame's own k faces on the same instance
        id_time = round_half_up_us(spec_.stage2.alpha_us +
                                   spec_.stage2.beta_us * k);
      }
      eng_.schedule(eng_.now() + prep + det + id_time,
                    [this, id, prep, det, id_time, k] {
                      on_stage1_done(id, prep, det, id_time, k);
                    });
    }
  }

  void on_stage1_done(std::uint64_t id, std::uint64_t prep, std::uint64_t det,
                      std::uint64_t id_time, std::uint32_t k) {
    stage1_ledger_.stop(id, eng_.now());
    --s1_busy_;
    Frame& f = frames_.at(id);
    f.det_phases.prep += prep;
    f.det_phases.inference += det + id_time;
    f.mark = eng_.now();
    if (spec_.kind == BrokerKind::Fused || k == 0) {
      complete_frame(id);
    } else {
      f.faces_left = k;
      for (std::uint32_t i = 0; i < k; ++i) {
        const std::uint64_t face_key = ++next_face_key_;
        Face face;
        face.frame = id;
        face.mark = eng_.now();
        faces_[face_key] = face;
        // publish is asynchronous: every face message is in flight at
        // once, only the consumer serializes deliveries
        eng_.schedule(eng_.now() + delay_.publish_us, [this, face_key] {
          Face& fc = faces_.at(face_key);
          fc.phases.broker_publish += eng_.now() - fc.mark;
          fc.mark = eng_.now();
          broker_queue_.push_back(face_key);
          pump_consume();
        });
      }
    }
    pump_stage1();
  }

  // ---- broker: async publish delay feeding a single FIFO consumer ----

  void pump_consume() {
    if (consume_busy_ || broker_queue_.empty()) return;
    const std::uint64_t key = broker_queue_.front();
    broker_queue_.pop_front();
    consume_busy_ = true;
    Face& face = faces_.at(key);
    face.phases.broker_wait += eng_.now() - face.mark;
    face.mark = eng_.now();
    eng_.schedule(eng_.now() + delay_.consume_us, [this, key] {
      consume_busy_ = false;
      Face& f = faces_.at(key);
      f.phases.broker_consume += eng_.now() - f.mark;
      f.mark = eng_.now();
      stage2_batcher_->add(key);
      pump_consume();
    });
  }

  // ---- stage 2: dynamic batching across frames ----

  void on_id_batch(std::vector<PendingItem>&& batch) {
    max_batch_dispatched_ = std::max(
        max_batch_dispatched_, static_cast<std::uint32_t>(batch.size()));
    for (const PendingItem& it : batch) {
      max_batcher_wait_ =
          std::max(max_batcher_wait_, eng_.now() - it.enqueued_at);
    }
    stage2_jobs_.push_back(std::move(batch));
    pump_stage2();
  }

  void pump_stage2() {
    while (s2_busy_ < spec_.stage2.servers && !stage2_jobs_.empty()) {
      std::vector<PendingItem> batch = std::move(stage2_jobs_.front());
      stage2_jobs_.pop_front();
      ++s2_busy_;
      const std::uint64_t job = ++next_job_key_;
      stage2_ledger_.start(job, eng_.now());
      for (const PendingItem& it : batch) {
        Face& f = faces_.at(it.id);
        f.phases.batch_queue += eng_.now() - f.mark;
        f.mark = eng_.now();
      }
      const std::uint64_t dur = round_half_up_us(
          spec_.stage2.alpha_us +
          spec_.stage2.beta_us * static_cast<double>(batch.size()));
      eng_.schedule(eng_.now() + dur, [this, job, batch = std::move(batch)] {
        stage2_ledger_.stop(job, eng_.now());
        --s2_busy_;
        for (const PendingItem& it : batch) on_face_done(it.id);
        pump_stage2();
      });
    }
  }

  void on_face_done(std::uint64_t key) {
    Face& face = faces_.at(key);
    face.phases.inference += eng_.now() - face.mark;
    Frame& f = frames_.at(face.frame);
    // the frame's breakdown follows its last-completing face
    f.last_face_done = eng_.now();
    f.last_face_phases = face.phases;
    faces_.erase(key);
    if (--f.faces_left == 0) complete_frame(f.id);
  }

  void complete_frame(std::uint64_t id) {
    Frame& f = frames_.at(id);
    ++completions_;
    const std::uint64_t warm = cfg_.workload.warm_up_count();
    if (completions_ == warm) {
      window_start_ = eng_.now();
      sample_busy(true);
    }
    if (completions_ > warm && completions_ <= cfg_.workload.total_requests) {
      TraceRecord t;
      t.id = f.id;
      t.image_class = "frame";
      t.issued_at = f.issued_at;
      t.completed_at = eng_.now();
      t.phases = f.det_phases;
      const PhaseBreakdown& p = f.last_face_phases;
      t.phases.broker_publish += p.broker_publish;
      t.phases.broker_wait += p.broker_wait;
      t.phases.broker_consume += p.broker_consume;
      t.phases.batch_queue += p.batch_queue;
      t.phases.inference += p.inference;
      if (t.phases.sum() != t.latency()) {
        throw SimError("frame breakdown does not tile its latency");
      }
      trace_.push_back(std::move(t));
    }
    frames_.erase(id);
    if (completions_ == cfg_.workload.total_requests) {
      window_end_ = eng_.now();
      sample_busy(false);
      eng_.request_stop();
      return;
    }
    issue();
  }

  void sample_busy(bool at_start) {
    const SimTime now = eng_.now();
    if (at_start) {
      s1_busy_start_ = stage1_ledger_.busy_at(now);
      s2_busy_start_ = stage2_ledger_.busy_at(now);
    } else {
      s1_busy_end_ = stage1_ledger_.busy_at(now);
      s2_busy_end_ = stage2_ledger_.busy_at(now);
    }
  }

  ScenarioConfig cfg_;
  TwoStageSpec spec_;
  Engine eng_;
  RngStream fanout_rng_;
  BrokerDelay delay_;

  std::unordered_map<std::uint64_t, Frame> frames_;
  std::unordered_map<std::uint64_t, Face> faces_;
  std::deque<std::uint64_t> stage1_queue_;
  std::uint32_t s1_busy_ = 0;
  std::deque<std::uint64_t> broker_queue_;
  bool consume_busy_ = false;
  std::unique_ptr<BatchQueue> stage2_batcher_;
  std::deque<std::vector<PendingItem>> stage2_jobs_;
  std::uint32_t s2_busy_ = 0;

  BusyLedger stage1_ledger_{1};
  BusyLedger stage2_ledger_{1};
  std::uint64_t s1_busy_start_ = 0, s1_busy_end_ = 0;
  std::uint64_t s2_busy_start_ = 0, s2_busy_end_ = 0;

  std::uint64_t next_frame_id_ = 0;
  std::uint64_t next_face_key_ = 0;
  std::uint64_t next_job_key_ = 0;
  std::uint64_t completions_ = 0;
  SimTime window_start_ = 0, window_end_ = 0;
  std::vector<TraceRecord> trace_;
  std::uint64_t max_batcher_wait_ = 0;
  std::uint32_t max_batch_dispatched_ = 0;
};

inline RunReport run_two_stage(const ScenarioConfig& cfg,
                               std::vector<TraceRecord>* trace_out = nullptr) {
  TwoStageSim sim(cfg);
  return sim.run(trace_out);
}

}  // namespace servesim
