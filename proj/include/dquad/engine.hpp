#pragma once

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dquad/compensated_sum.hpp"
#include "dquad/driver.hpp"
#include "dquad/errors.hpp"
#include "dquad/redistribution.hpp"
#include "dquad/region.hpp"
#include "dquad/rules.hpp"
#include "dquad/transfer.hpp"

namespace dquad {

/// Per-rank payload of the once-per-iteration global reduction.
struct MetadataRecord {
  int rank = 0;
  double partial_integral = 0.0;
  double partial_error = 0.0;
  double inflight_integral_bound = 0.0;
  double inflight_error_bound = 0.0;
  std::size_t active_count = 0;
};

struct ReducedMetadata {
  double integral = 0.0;
  double error_conservative = 0.0;
  double inflight_integral_bound = 0.0;
  double inflight_error_bound = 0.0;
  bool converged = false;
  std::vector<std::size_t> counts;  // active_count by rank
};

/// Combines one record per rank. The integral counts each region once (by the
/// rank holding it); the error adds the senders' bounds for batches still in
/// transit, so convergence is never declared on work that has not landed.
[[nodiscard]] inline ReducedMetadata metadata_reduce(std::span<const MetadataRecord> records, int workers,
                                                     const DriverConfig& cfg) {
  if (workers < 1 || records.size() != static_cast<std::size_t>(workers)) {
    throw ProtocolError("metadata_reduce: expected " + std::to_string(workers) + " records, got " +
                        std::to_string(records.size()));
  }
  std::vector<const MetadataRecord*> by_rank(static_cast<std::size_t>(workers), nullptr);
  for (const auto& r : records) {
    if (r.rank < 0 || r.rank >= workers || by_rank[static_cast<std::size_t>(r.rank)] != nullptr) {
      throw ProtocolError("metadata_reduce: missing or duplicate record for rank " + std::to_string(r.rank));
    }
    if (r.inflight_error_bound < 0.0 || r.inflight_integral_bound < 0.0) {
      throw ProtocolError("metadata_reduce: negative in-flight bound from rank " + std::to_string(r.rank));
    }
    by_rank[static_cast<std::size_t>(r.rank)] = &r;
  }
  CompensatedSum integral;
  CompensatedSum error;
  CompensatedSum inflight_err;
  CompensatedSum inflight_int;
  ReducedMetadata out;
  out.counts.reserve(by_rank.size());
  for (const auto* r : by_rank) {
    integral.add(r->partial_integral);
    error.add(r->partial_error);
    inflight_err.add(r->inflight_error_bound);
    inflight_int.add(r->inflight_integral_bound);
    out.counts.push_back(r->active_count);
  }
  out.integral = integral.value();
  out.inflight_error_bound = inflight_err.value();
  out.inflight_integral_bound = inflight_int.value();
  error.add(out.inflight_error_bound);
  out.error_conservative = error.value();
  out.converged = check_convergence(out.integral, out.error_conservative, cfg);
  return out;
}

enum class Backend { deterministic_sim, concurrent };

[[nodiscard]] inline std::string to_string(Backend b) {
  return b == Backend::deterministic_sim ? "deterministic_sim" : "concurrent";
}

/// Virtual-time model for the simulation backend. One unit is one integrand
/// evaluation.
struct SimulationCostModel {
  double per_f_eval = 1.0;
  double per_region_split = 1.0;       // fused classify/filter/split pass
  double message_latency = 100.0;
  double per_region_transfer = 1.0;    // multiplied by 2d bound values
  double per_region_pack = 0.01;       // bookkeeping on the sender
  std::size_t delivery_delay = 1;      // iterations between send and delivery
  std::size_t ack_timeout = 3;         // liveness guard: max iterations unacknowledged
};

struct EngineOptions {
  Backend backend = Backend::deterministic_sim;
  SimulationCostModel sim;
};

/// Where a worker's time went. Seconds on the concurrent backend, virtual
/// units on the simulator.
struct TimeBreakdown {
  int rank = 0;
  std::size_t iterations = 0;
  double compute = 0.0;
  double idle = 0.0;
  double bookkeeping = 0.0;
  std::size_t messages_out = 0;
  std::size_t regions_out = 0;
  std::size_t messages_in = 0;
  std::size_t regions_in = 0;
  std::size_t f_evals = 0;

  [[nodiscard]] double accounted() const noexcept { return compute + idle + bookkeeping; }
  [[nodiscard]] double compute_fraction() const noexcept { return accounted() > 0 ? compute / accounted() : 0.0; }
  [[nodiscard]] double idle_fraction() const noexcept { return accounted() > 0 ? idle / accounted() : 0.0; }
};

/// Instrumentation emitted by the simulator after every exchange and every
/// redistribution phase.
struct EngineSnapshot {
  std::size_t iteration = 0;
  ReducedMetadata reduced;
  std::vector<MetadataRecord> records;
  /// (reporting rank, sequence id) for every in-flight bound in the records.
  std::vector<std::pair<int, std::uint64_t>> reported_inflight;
  /// (sender, sequence id) of batches sent but not yet delivered.
  std::vector<std::pair<int, std::uint64_t>> in_transit;
  // Region accounting after this iteration's split and sends.
  std::size_t children_produced = 0;
  std::size_t carried_in_transit = 0;
  std::size_t stored_after = 0;
  std::size_t in_transit_after = 0;
  std::vector<std::size_t> batch_sizes;  // regions per batch sent this iteration
  bool redistribution_done = false;
};

using EngineObserver = std::function<void(const EngineSnapshot&)>;

struct DistributedResult {
  IntegrationResult result;
  std::vector<TimeBreakdown> workers;
  /// Conservative error at the exchange that ended the run.
  double final_error_conservative = 0.0;
  /// Error recomputed from the settled stores (nothing in transit).
  double settled_error = 0.0;
  std::size_t regions_transferred = 0;
  std::size_t messages = 0;
  std::size_t largest_batch = 0;
  /// Virtual units (simulator) or wall seconds (concurrent).
  double elapsed = 0.0;
  bool conservation_held = true;
};

namespace detail {

struct InFlight {
  int to = 0;
  double error_bound = 0.0;
  double integral_bound = 0.0;
  std::size_t regions = 0;
  std::size_t sent_iteration = 0;
};

/// State and steps shared by both backends. A worker only touches its own
/// store; everything it exchanges goes through encoded frames, acks and records.
template <class F>
class WorkerCore {
 public:
  WorkerCore(int rank, const RuleTable& table, F f, int dim) : rank_(rank), evaluator_(table), f_(std::move(f)), store_(dim) {
    times_.rank = rank;
  }

  [[nodiscard]] int rank() const noexcept { return rank_; }
  RegionStore& store() noexcept { return store_; }
  [[nodiscard]] const RegionStore& store() const noexcept { return store_; }
  FinalizedTotals& totals() noexcept { return totals_; }
  TimeBreakdown& times() noexcept { return times_; }
  [[nodiscard]] const std::map<std::uint64_t, InFlight>& inflight() const noexcept { return inflight_; }

  /// Unpacks a frame into the store; returns (sender, sequence id) to acknowledge.
  std::pair<int, std::uint64_t> receive(std::span<const std::byte> frame) {
    const TransferBatch b = decode(frame);
    if (static_cast<int>(b.to_rank) != rank_) throw ProtocolError("batch delivered to the wrong rank");
    b.unpack_into(store_);
    ++times_.messages_in;
    times_.regions_in += b.region_count();
    return {static_cast<int>(b.from_rank), b.sequence_id};
  }

  void acknowledge(std::uint64_t seq) {
    if (inflight_.erase(seq) == 0) throw ProtocolError("acknowledgement for unknown batch " + std::to_string(seq));
  }

  /// Evaluates pending regions (all of them on a normal iteration). Returns integrand calls.
  std::size_t evaluate(bool pending_only = false) {
    std::size_t evals = 0;
    partial_ = evaluate_batch(store_, evaluator_, f_, totals_, evals, pending_only);
    times_.f_evals += evals;
    return evals;
  }

  [[nodiscard]] MetadataRecord record() const {
    MetadataRecord r;
    r.rank = rank_;
    r.partial_integral = partial_.integral;
    r.partial_error = partial_.error;
    CompensatedSum ie;
    CompensatedSum ii;
    for (const auto& [seq, b] : inflight_) {
      ie.add(b.error_bound);
      ii.add(b.integral_bound);
    }
    r.inflight_error_bound = ie.value();
    r.inflight_integral_bound = ii.value();
    r.active_count = store_.size();
    return r;
  }

  [[nodiscard]] const GlobalEstimate& partial() const noexcept { return partial_; }

  struct PendingSplit {
    RegionStore children;
    FinalizedTotals totals;
  };

  /// Fused classify/filter/split against the global estimate, not yet applied.
  [[nodiscard]] PendingSplit prepare_split(double global_integral, const DriverConfig& cfg,
                                           const DomainInfo& domain) const {
    GlobalEstimate g;
    g.integral = global_integral;
    PendingSplit p{RegionStore(store_.dim()), totals_};
    p.children = classify_filter_split(store_, g, cfg, domain, p.totals).children;
    return p;
  }

  void commit(PendingSplit&& p) {
    store_ = std::move(p.children);
    totals_ = std::move(p.totals);
  }

  /// prepare + commit, unless the children would exceed `max_regions`, in
  /// which case the store is left alone and nullopt comes back.
  std::optional<std::size_t> filter_split(double global_integral, const DriverConfig& cfg, const DomainInfo& domain) {
    auto p = prepare_split(global_integral, cfg, domain);
    if (p.children.size() > cfg.max_regions) return std::nullopt;
    commit(std::move(p));
    return store_.size();
  }

  /// Removes up to `n` top-error regions (never more than half the store) and
  /// returns the encoded batch, or nothing if there is nothing to give.
  std::optional<std::vector<std::byte>> send(int to, std::size_t n, std::uint64_t seq, std::size_t iteration) {
    n = std::min(n, store_.size() / 2);
    if (n == 0) return std::nullopt;
    TransferBatch b = make_batch(store_, rank_, to, seq, n);
    inflight_[seq] = InFlight{to, b.attached_error_bound, b.attached_integral_bound, b.region_count(), iteration};
    ++times_.messages_out;
    times_.regions_out += b.region_count();
    return encode(b);
  }

 private:
  int rank_;
  RuleEvaluator evaluator_;
  F f_;
  RegionStore store_;
  FinalizedTotals totals_;
  GlobalEstimate partial_;
  std::map<std::uint64_t, InFlight> inflight_;
  TimeBreakdown times_;
};

inline std::uint64_t sequence_id(std::size_t iteration, int from, int workers) {
  return static_cast<std::uint64_t>(iteration) * static_cast<std::uint64_t>(workers) + static_cast<std::uint64_t>(from);
}

template <class Core>
void deal_initial_partition(std::vector<Core>& workers, const HyperRect& domain, std::size_t per_rank) {
  const auto parts = uniform_partition(domain, workers.size() * per_rank);
  for (std::size_t i = 0; i < parts.size(); ++i) workers[i % workers.size()].store().push_back(parts[i]);
}

/// Final numbers from stores with nothing in transit.
template <class Core>
std::pair<double, double> settled_totals(std::vector<Core>& workers) {
  CompensatedSum integral;
  CompensatedSum error;
  for (auto& w : workers) {
    const GlobalEstimate g = reduce_store(w.store(), w.totals());
    integral.add(g.integral);
    error.add(g.error);
  }
  return {integral.value(), error.value()};
}

struct SimMessage {
  int from = 0;
  int to = 0;
  std::uint64_t seq = 0;
  std::size_t due_iteration = 0;
  double arrival = 0.0;
  std::size_t regions = 0;
  std::vector<std::byte> frame;
};

template <class F>
DistributedResult run_simulated(const F& f, const HyperRect& domain, const DriverConfig& cfg,
                                const RedistributionConfig& rcfg, int P, const SimulationCostModel& cost,
                                const RuleTable& table, const EngineObserver& observer) {
  const DomainInfo info = DomainInfo::of(domain);
  std::vector<WorkerCore<F>> workers;
  workers.reserve(static_cast<std::size_t>(P));
  for (int r = 0; r < P; ++r) workers.emplace_back(r, table, f, domain.dim());
  deal_initial_partition(workers, domain, rcfg.initial_subdomains_per_rank);

  std::vector<double> clock(static_cast<std::size_t>(P), 0.0);
  std::deque<SimMessage> transit;
  std::vector<std::pair<int, std::uint64_t>> pending_acks;  // (sender, seq)
  DistributedResult out;
  IntegrationResult& res = out.result;
  ReducedMetadata reduced;
  const double region_bytes = 2.0 * domain.dim();

  auto deliver = [&](SimMessage& m) {
    auto& w = workers[static_cast<std::size_t>(m.to)];
    auto& t = clock[static_cast<std::size_t>(m.to)];
    if (m.arrival > t) {
      w.times().idle += m.arrival - t;
      t = m.arrival;
    }
    pending_acks.push_back(w.receive(m.frame));
  };

  auto finish = [&](Termination why) {
    // Settle: land everything still in transit, evaluate it, recompute.
    while (!transit.empty()) {
      deliver(transit.front());
      transit.pop_front();
    }
    for (auto [from, seq] : pending_acks) workers[static_cast<std::size_t>(from)].acknowledge(seq);
    pending_acks.clear();
    for (std::size_t r = 0; r < workers.size(); ++r) {
      const std::size_t evals = workers[r].evaluate(true);
      res.total_f_evals += evals;
      const double c = static_cast<double>(evals) * cost.per_f_eval;
      clock[r] += c;
      workers[r].times().compute += c;
    }
    const double end = *std::max_element(clock.begin(), clock.end());
    for (std::size_t r = 0; r < workers.size(); ++r) {
      workers[r].times().idle += end - clock[r];
      clock[r] = end;
    }
    const auto [integral, error] = settled_totals(workers);
    res.integral = integral;
    res.error = error;
    res.termination = why;
    res.converged = why == Termination::tolerance;
    out.final_error_conservative = reduced.error_conservative;
    out.settled_error = error;
    out.elapsed = end;
    for (auto& w : workers) {
      w.times().iterations = res.iterations;
      out.workers.push_back(w.times());
    }
    return out;
  };

  for (std::size_t iter = 1; iter <= cfg.max_iterations; ++iter) {
    res.iterations = iter;
    // 1. land due batches
    while (!transit.empty() && transit.front().due_iteration <= iter) {
      deliver(transit.front());
      transit.pop_front();
    }
    // 2. evaluate
    std::size_t stored = 0;
    std::size_t evals_this_iter = 0;
    for (std::size_t r = 0; r < workers.size(); ++r) {
      const std::size_t evals = workers[r].evaluate();
      evals_this_iter += evals;
      const double c = static_cast<double>(evals) * cost.per_f_eval;
      clock[r] += c;
      workers[r].times().compute += c;
      stored += workers[r].store().size();
    }
    res.total_f_evals += evals_this_iter;
    res.peak_regions = std::max(res.peak_regions, stored);

    // 3. exchange: acks first, then records, then the barrier
    for (auto [from, seq] : pending_acks) workers[static_cast<std::size_t>(from)].acknowledge(seq);
    pending_acks.clear();
    EngineSnapshot snap;
    snap.iteration = iter;
    for (auto& w : workers) {
      for (const auto& [seq, b] : w.inflight()) {
        if (iter - b.sent_iteration > cost.ack_timeout) {
          throw ProtocolError("batch " + std::to_string(seq) + " from rank " + std::to_string(w.rank()) +
                              " unacknowledged for more than " + std::to_string(cost.ack_timeout) + " iterations");
        }
        snap.reported_inflight.emplace_back(w.rank(), seq);
      }
      snap.records.push_back(w.record());
    }
    for (const auto& m : transit) snap.in_transit.emplace_back(m.from, m.seq);
    const double barrier = *std::max_element(clock.begin(), clock.end());
    for (std::size_t r = 0; r < workers.size(); ++r) {
      workers[r].times().idle += barrier - clock[r];
      clock[r] = barrier;
    }
    reduced = metadata_reduce(snap.records, P, cfg);
    snap.reduced = reduced;
    if (observer) observer(snap);

    if (reduced.converged) return finish(Termination::tolerance);
    if (stored == 0 && transit.empty()) return finish(Termination::width_guard_exhausted);

    // 4. fused filter/split, then redistribution
    snap.carried_in_transit = 0;
    for (const auto& m : transit) snap.carried_in_transit += m.regions;
    std::vector<typename WorkerCore<F>::PendingSplit> splits;
    splits.reserve(workers.size());
    bool guard = false;
    for (auto& w : workers) {
      splits.push_back(w.prepare_split(reduced.integral, cfg, info));
      guard = guard || splits.back().children.size() > cfg.max_regions;
    }
    if (guard) return finish(Termination::max_regions);
    for (std::size_t r = 0; r < workers.size(); ++r) {
      const double c = static_cast<double>(workers[r].store().size()) * cost.per_region_split;
      clock[r] += c;
      workers[r].times().compute += c;
      snap.children_produced += splits[r].children.size();
      workers[r].commit(std::move(splits[r]));
    }

    const auto pairs = rcfg.policy->pairs(P, iter - 1);
    for (const auto& pair : pairs) {
      const auto plan = rcfg.policy->plan(pair, reduced.counts, rcfg.cap);
      if (!plan) continue;
      auto& donor = workers[static_cast<std::size_t>(plan->from)];
      const std::uint64_t seq = sequence_id(iter, plan->from, P);
      auto frame = donor.send(plan->to, std::min(plan->count, rcfg.cap), seq, iter);
      if (!frame) continue;
      const std::size_t n = donor.inflight().at(seq).regions;
      auto& t = clock[static_cast<std::size_t>(plan->from)];
      const double pack = cost.per_region_pack * static_cast<double>(n);
      t += pack;
      donor.times().bookkeeping += pack;
      SimMessage m;
      m.from = plan->from;
      m.to = plan->to;
      m.seq = seq;
      m.due_iteration = iter + std::max<std::size_t>(cost.delivery_delay, 1);
      m.arrival = t + cost.message_latency + cost.per_region_transfer * region_bytes * static_cast<double>(n);
      m.regions = n;
      m.frame = std::move(*frame);
      transit.push_back(std::move(m));
      snap.batch_sizes.push_back(n);
      ++out.messages;
      out.regions_transferred += n;
      out.largest_batch = std::max(out.largest_batch, n);
    }
    for (auto& w : workers) snap.stored_after += w.store().size();
    for (const auto& m : transit) snap.in_transit_after += m.regions;
    if (snap.stored_after + snap.in_transit_after != snap.children_produced + snap.carried_in_transit) {
      out.conservation_held = false;
    }
    snap.redistribution_done = true;
    if (observer) observer(snap);
  }
  return finish(Termination::max_iterations);
}

/// Thread-safe frame and acknowledgement queues for one rank.
struct Mailbox {
  std::mutex mutex;
  std::deque<std::vector<std::byte>> frames;
  std::deque<std::uint64_t> acks;

  void post_frame(std::vector<std::byte> f) {
    std::lock_guard lock(mutex);
    frames.push_back(std::move(f));
  }
  void post_ack(std::uint64_t seq) {
    std::lock_guard lock(mutex);
    acks.push_back(seq);
  }
  std::deque<std::vector<std::byte>> take_frames() {
    std::lock_guard lock(mutex);
    return std::exchange(frames, {});
  }
  std::deque<std::uint64_t> take_acks() {
    std::lock_guard lock(mutex);
    return std::exchange(acks, {});
  }
};

template <class F>
DistributedResult run_concurrent(const F& f, const HyperRect& domain, const DriverConfig& cfg,
                                 const RedistributionConfig& rcfg, int P, const RuleTable& table) {
  using clock_t = std::chrono::steady_clock;
  const DomainInfo info = DomainInfo::of(domain);
  std::vector<WorkerCore<F>> workers;
  workers.reserve(static_cast<std::size_t>(P));
  for (int r = 0; r < P; ++r) workers.emplace_back(r, table, f, domain.dim());
  deal_initial_partition(workers, domain, rcfg.initial_subdomains_per_rank);
  std::vector<Mailbox> boxes(static_cast<std::size_t>(P));

  struct Slot {
    MetadataRecord record;
    bool guard = false;
    std::size_t evals = 0;
    std::size_t stored = 0;
  };
  struct Decision {
    ReducedMetadata reduced;
    bool stop = false;
    Termination why = Termination::max_iterations;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(P));
  Decision decision;
  std::size_t iteration = 0;
  DistributedResult out;
  IntegrationResult& res = out.result;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto complete = [&]() noexcept {
    try {
      ++iteration;
      std::vector<MetadataRecord> records;
      bool guard = false;
      std::size_t stored = 0;
      for (const auto& s : slots) {
        records.push_back(s.record);
        guard = guard || s.guard;
        res.total_f_evals += s.evals;
        stored += s.stored;
      }
      res.iterations = iteration;
      res.peak_regions = std::max(res.peak_regions, stored);
      decision.reduced = metadata_reduce(records, P, cfg);
      decision.stop = true;
      if (decision.reduced.converged) {
        decision.why = Termination::tolerance;
      } else if (guard) {
        decision.why = Termination::max_regions;
      } else if (stored == 0 && decision.reduced.inflight_error_bound == 0.0) {
        decision.why = Termination::width_guard_exhausted;
      } else if (iteration >= cfg.max_iterations) {
        decision.why = Termination::max_iterations;
      } else {
        decision.stop = false;
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      decision.stop = true;
    }
  };
  std::barrier sync(P, complete);

  auto body = [&](int rank) {
    auto& w = workers[static_cast<std::size_t>(rank)];
    auto& box = boxes[static_cast<std::size_t>(rank)];
    auto& times = w.times();
    bool guard = false;
    std::size_t iter = 0;
    auto seconds = [](clock_t::duration d) { return std::chrono::duration<double>(d).count(); };
    try {
      for (;;) {
        ++iter;
        auto t0 = clock_t::now();
        for (auto& frame : box.take_frames()) {
          const auto [from, seq] = w.receive(frame);
          boxes[static_cast<std::size_t>(from)].post_ack(seq);
        }
        auto t1 = clock_t::now();
        const std::size_t evals = guard ? 0 : w.evaluate();
        auto t2 = clock_t::now();
        for (auto seq : box.take_acks()) w.acknowledge(seq);
        Slot& slot = slots[static_cast<std::size_t>(rank)];
        slot.record = w.record();
        slot.guard = guard;
        slot.evals = evals;
        slot.stored = w.store().size();
        auto t3 = clock_t::now();
        sync.arrive_and_wait();
        auto t4 = clock_t::now();
        times.bookkeeping += seconds(t1 - t0) + seconds(t3 - t2);
        times.compute += seconds(t2 - t1);
        times.idle += seconds(t4 - t3);
        if (decision.stop) break;

        auto t5 = clock_t::now();
        const auto n_out = w.filter_split(decision.reduced.integral, cfg, info);
        guard = !n_out.has_value();
        auto t6 = clock_t::now();
        times.compute += seconds(t6 - t5);
        if (!guard) {
          for (const auto& pair : rcfg.policy->pairs(P, iter - 1)) {
            const auto plan = rcfg.policy->plan(pair, decision.reduced.counts, rcfg.cap);
            if (!plan || plan->from != rank) continue;
            auto frame = w.send(plan->to, std::min(plan->count, rcfg.cap), sequence_id(iter, rank, P), iter);
            if (frame) boxes[static_cast<std::size_t>(plan->to)].post_frame(std::move(*frame));
          }
        }
        times.bookkeeping += seconds(clock_t::now() - t6);
      }
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
      sync.arrive_and_drop();
    }
    times.iterations = iter;
  };

  const auto wall0 = clock_t::now();
  {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(P));
    for (int r = 0; r < P; ++r) threads.emplace_back(body, r);
  }
  if (failure) std::rethrow_exception(failure);

  // Settle on the calling thread once every worker has stopped.
  for (int r = 0; r < P; ++r) {
    for (auto& frame : boxes[static_cast<std::size_t>(r)].take_frames()) {
      const auto [from, seq] = workers[static_cast<std::size_t>(r)].receive(frame);
      boxes[static_cast<std::size_t>(from)].post_ack(seq);
    }
  }
  for (int r = 0; r < P; ++r) {
    for (auto seq : boxes[static_cast<std::size_t>(r)].take_acks()) workers[static_cast<std::size_t>(r)].acknowledge(seq);
    res.total_f_evals += workers[static_cast<std::size_t>(r)].evaluate(true);
  }
  const auto [integral, error] = settled_totals(workers);
  res.integral = integral;
  res.error = error;
  res.termination = decision.why;
  res.converged = decision.why == Termination::tolerance;
  out.final_error_conservative = decision.reduced.error_conservative;
  out.settled_error = error;
  out.elapsed = std::chrono::duration<double>(clock_t::now() - wall0).count();
  for (auto& w : workers) {
    out.messages += w.times().messages_out;
    out.regions_transferred += w.times().regions_out;
    out.workers.push_back(w.times());
  }
  return out;
}

}  // namespace detail

/// Runs the adaptive loop on P workers with round-robin rebalancing.
///
/// Each iteration a worker lands delivered batches, evaluates its store,
/// joins the metadata reduction (the only global synchronisation) and, unless
/// converged, filters/splits and sends its largest-error regions to its
/// scheduled partner. The reported integral and error are recomputed after
/// every batch in transit has landed.
template <Integrand F>
[[nodiscard]] DistributedResult run_distributed(const F& f, const HyperRect& domain, const DriverConfig& cfg,
                                                const RedistributionConfig& rcfg, int workers,
                                                const EngineOptions& options = {}, const EngineObserver& observer = {}) {
  cfg.validate();
  rcfg.validate();
  if (workers < 1) throw ContractViolation("run_distributed: need at least one worker");
  if (cfg.rule == RuleId::gk_tensor && workers > 1) {
    throw ContractViolation("run_distributed: the tensor Gauss-Kronrod rule is single-worker only");
  }
  const RuleTable table = make_rule(cfg.rule, domain.dim());
  if (options.backend == Backend::deterministic_sim) {
    return detail::run_simulated(f, domain, cfg, rcfg, workers, options.sim, table, observer);
  }
  return detail::run_concurrent(f, domain, cfg, rcfg, workers, table);
}

}  // namespace dquad
