#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/model.hpp"
#include "beamsched/policies.hpp"
#include "beamsched/system.hpp"
#include "beamsched/whittle.hpp"

namespace beamsched {

enum class Substream : std::uint32_t { Policy = 1, Channel = 2, Arrival = 3 };

/// Independent generator for one named substream of a root seed.
inline Rng make_substream(std::uint64_t root, Substream which) {
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(which), 0x9e3779b9u};
  return Rng(seq);
}

/// Per-user FIFO of packet arrival slots.
struct SimState {
  std::vector<std::deque<long>> queues;
  long slot = 0;

  explicit SimState(std::size_t users) : queues(users) {}

  std::vector<int> lengths() const {
    std::vector<int> out;
    out.reserve(queues.size());
    for (const auto& q : queues) out.push_back(static_cast<int>(q.size()));
    return out;
  }
};

/// Running sums over one replication, from which every metric is derived.
struct RawAccumulators {
  long horizon = 0;
  long warmup = 0;
  std::vector<double> window_cost;       // per user, slots >= warmup
  std::vector<double> window_queue;      // per user queue length, slots >= warmup
  std::vector<long> active_slots;        // per user, all slots
  std::vector<long> arrivals, departed, dropped, residual;
  std::vector<long long> delay_sum;      // per user over departed packets

  explicit RawAccumulators(std::size_t users = 0)
      : window_cost(users), window_queue(users), active_slots(users), arrivals(users), departed(users),
        dropped(users), residual(users), delay_sum(users) {}
};

struct UserMetrics {
  double avg_cost = 0.0;
  std::optional<double> avg_delay;
  double avg_queue = 0.0;
  double active_fraction = 0.0;
  long arrivals = 0, departed = 0, dropped = 0, residual = 0;
};

struct MetricsSummary {
  double avg_cost = 0.0;
  std::optional<double> avg_delay;  // empty when no packet departed
  double avg_active_beams = 0.0;
  std::vector<UserMetrics> per_user;
  long arrivals = 0, departed_packets = 0, dropped_packets = 0, residual_packets = 0;
};

inline MetricsSummary compute_metrics(const RawAccumulators& acc) {
  if (acc.horizon < 1) throw ValidationError("compute_metrics: horizon must be positive");
  if (acc.warmup < 0 || acc.warmup >= acc.horizon) throw ValidationError("compute_metrics: warmup must be < horizon");
  const double window = double(acc.horizon - acc.warmup);
  const double all = double(acc.horizon);
  MetricsSummary m;
  long long delay_total = 0;
  long active_total = 0;
  for (std::size_t i = 0; i < acc.window_cost.size(); ++i) {
    UserMetrics u;
    u.avg_cost = acc.window_cost[i] / window;
    u.avg_queue = acc.window_queue[i] / window;
    u.active_fraction = double(acc.active_slots[i]) / all;
    u.arrivals = acc.arrivals[i];
    u.departed = acc.departed[i];
    u.dropped = acc.dropped[i];
    u.residual = acc.residual[i];
    if (u.departed > 0) u.avg_delay = double(acc.delay_sum[i]) / double(u.departed);
    m.avg_cost += u.avg_cost;
    m.arrivals += u.arrivals;
    m.departed_packets += u.departed;
    m.dropped_packets += u.dropped;
    m.residual_packets += u.residual;
    delay_total += acc.delay_sum[i];
    active_total += acc.active_slots[i];
    m.per_user.push_back(u);
  }
  m.avg_active_beams = double(active_total) / all;
  if (m.departed_packets > 0) m.avg_delay = double(delay_total) / double(m.departed_packets);
  return m;
}

/// What happened in one slot; recorded only on request.
struct SlotLog {
  long slot = 0;
  std::vector<int> queues;    // at slot start
  std::vector<int> action;    // 1 if a beam was formed
  std::vector<int> channel;   // drawn for every user; only used when active
  std::vector<int> arrival;
  std::vector<long> served_stamp;  // arrival slot of the departing packet, -1 if none
  double cost = 0.0;
};

struct SimOptions {
  // Replace a drawn sample; arguments are (slot, user, drawn value).
  std::function<int(long, int, int)> arrival_override;
  std::function<int(long, int, int)> channel_override;
  bool record_log = false;
  std::ostream* trace = nullptr;
};

struct SimulationRun {
  MetricsSummary metrics;
  std::vector<SlotLog> log;
};

/// Policy dispatch bound to one configuration.
class Scheduler {
 public:
  Scheduler(const SystemConfig& cfg, std::span<const WhittleTable> tables)
      : kind_(cfg.policy), beams_(cfg.num_beams), tables_(tables.begin(), tables.end()) {
    for (const auto& u : cfg.users) channel_.push_back(u.channel_prob);
    if (kind_ == PolicyKind::WFQ) weights_ = cfg.effective_wfq_weights();
    if (kind_ == PolicyKind::Whittle) {
      if (tables_.size() != cfg.users.size()) throw ValidationError("whittle policy needs one index table per user");
      for (std::size_t i = 0; i < tables_.size(); ++i)
        if (tables_[i].max_state() != cfg.users[i].buffer_size)
          throw ValidationError("index table of user " + std::to_string(i) + " does not match its buffer size");
    }
  }

  Selection select(std::span<const int> queues, Rng& rng) const {
    switch (kind_) {
      case PolicyKind::Whittle: return whittle_select(queues, tables_, beams_, rng);
      case PolicyKind::LQF: return lqf_select(queues, beams_, rng);
      case PolicyKind::MWS: return mws_select(queues, channel_, beams_, rng);
      case PolicyKind::WFQ: return wfq_select(queues, weights_, beams_, rng);
      case PolicyKind::Random: return random_select(queues, beams_, rng);
    }
    throw ValidationError("unknown policy");
  }

 private:
  PolicyKind kind_;
  int beams_;
  std::vector<WhittleTable> tables_;
  std::vector<double> channel_;
  std::vector<double> weights_;
};

namespace detail {

inline void write_list(std::ostream& os, std::span<const int> v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
}

}  // namespace detail

/// One replication from empty queues. Per slot: holding cost of the
/// slot-start state, selection from queue lengths, beam costs, channel draws
/// and departures for served users, then arrivals at slot end.
inline SimulationRun simulate(const SystemConfig& cfg, std::span<const WhittleTable> tables,
                              const SimOptions& opt = {}) {
  cfg.validate();
  const Scheduler sched(cfg, tables);
  const std::size_t k = cfg.users.size();
  Rng policy_rng = make_substream(cfg.seed, Substream::Policy);
  Rng channel_rng = make_substream(cfg.seed, Substream::Channel);
  Rng arrival_rng = make_substream(cfg.seed, Substream::Arrival);

  SimState st(k);
  RawAccumulators acc(k);
  acc.horizon = cfg.horizon;
  acc.warmup = cfg.warmup;
  SimulationRun run;
  std::vector<int> action(k), channel(k), arrival(k);
  std::vector<long> served(k);
  if (opt.trace) *opt.trace << "slot\tqueues\taction\tchannel\tcost\n";

  for (long n = 0; n < cfg.horizon; ++n) {
    st.slot = n;
    const std::vector<int> q = st.lengths();
    double cost = 0.0;
    const bool in_window = n >= cfg.warmup;
    for (std::size_t i = 0; i < k; ++i) {
      const double h = holding_cost(q[i], cfg.users[i]);
      cost += h;
      if (in_window) {
        acc.window_cost[i] += h;
        acc.window_queue[i] += q[i];
      }
    }
    const Selection sel = sched.select(q, policy_rng);
    std::fill(action.begin(), action.end(), 0);
    for (int u : sel.chosen) action[u] = 1;

    for (std::size_t i = 0; i < k; ++i) {
      int s = uniform01(channel_rng) < cfg.users[i].channel_prob ? 1 : 0;
      if (opt.channel_override) s = opt.channel_override(n, static_cast<int>(i), s);
      channel[i] = s;
      served[i] = -1;
      if (!action[i]) continue;
      const double p = cfg.users[i].beam_cost;
      cost += p;
      if (in_window) acc.window_cost[i] += p;
      ++acc.active_slots[i];
      if (s && !st.queues[i].empty()) {
        const long stamp = st.queues[i].front();
        st.queues[i].pop_front();
        served[i] = stamp;
        ++acc.departed[i];
        acc.delay_sum[i] += n - stamp + 1;
      }
    }
    for (std::size_t i = 0; i < k; ++i) {
      int a = uniform01(arrival_rng) < cfg.users[i].arrival_prob ? 1 : 0;
      if (opt.arrival_override) a = opt.arrival_override(n, static_cast<int>(i), a);
      arrival[i] = a;
      if (!a) continue;
      ++acc.arrivals[i];
      if (static_cast<int>(st.queues[i].size()) >= cfg.users[i].buffer_size)
        ++acc.dropped[i];
      else
        st.queues[i].push_back(n + 1);
    }
    if (opt.record_log) run.log.push_back({n, q, action, channel, arrival, served, cost});
    if (opt.trace) {
      auto& os = *opt.trace;
      os << n << '\t';
      detail::write_list(os, q);
      os << '\t';
      detail::write_list(os, action);
      os << '\t';
      detail::write_list(os, channel);
      os << '\t' << cost << '\n';
    }
  }
  for (std::size_t i = 0; i < k; ++i) acc.residual[i] = static_cast<long>(st.queues[i].size());
  run.metrics = compute_metrics(acc);
  return run;
}

inline MetricsSummary run_simulation(const SystemConfig& cfg, std::span<const WhittleTable> tables = {}) {
  return simulate(cfg, tables).metrics;
}

/// Index tables for every user; identical users share one computation.
inline std::vector<WhittleTable> build_tables(const SystemConfig& cfg) {
  std::vector<WhittleTable> out;
  std::vector<std::pair<UserParams, std::size_t>> seen;
  for (std::size_t i = 0; i < cfg.users.size(); ++i) {
    const auto& u = cfg.users[i];
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) { return s.first == u; });
    if (it != seen.end()) {
      WhittleTable t = out[it->second];
      t.user_id = static_cast<int>(i);
      out.push_back(std::move(t));
      continue;
    }
    seen.emplace_back(u, i);
    out.push_back(build_index_table(UserModel(u), cfg.index, cfg.solver, static_cast<int>(i)));
  }
  return out;
}

struct MetricStat {
  double mean = 0.0;
  double ci_half_width = 0.0;  // 1.96 s / sqrt(n)
  int n = 0;
};

inline MetricStat summarize(std::span<const double> xs) {
  MetricStat s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / double(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.ci_half_width = 1.96 * std::sqrt(ss / double(xs.size() - 1)) / std::sqrt(double(xs.size()));
  }
  return s;
}

struct ReplicationSet {
  std::vector<MetricsSummary> runs;
  MetricStat avg_cost;
  std::optional<MetricStat> avg_delay;  // over replications with departures
  MetricStat avg_active_beams;
};

inline ReplicationSet aggregate(std::vector<MetricsSummary> runs) {
  ReplicationSet r;
  std::vector<double> cost, delay, beams;
  for (const auto& m : runs) {
    cost.push_back(m.avg_cost);
    beams.push_back(m.avg_active_beams);
    if (m.avg_delay) delay.push_back(*m.avg_delay);
  }
  r.avg_cost = summarize(cost);
  r.avg_active_beams = summarize(beams);
  if (!delay.empty()) r.avg_delay = summarize(delay);
  r.runs = std::move(runs);
  return r;
}

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Replication r runs with seed cfg.seed + r * seed_stride. Runs are
/// distributed over `workers` threads; results do not depend on the count.
inline ReplicationSet run_replications(const SystemConfig& cfg, int n_reps, std::uint64_t seed_stride,
                                       std::span<const WhittleTable> tables, unsigned workers = default_workers()) {
  if (n_reps < 1) throw ValidationError("n_reps must be >= 1");
  cfg.validate();
  std::vector<MetricsSummary> out(n_reps);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (int r; (r = next.fetch_add(1)) < n_reps;) {
      try {
        SystemConfig c = cfg;
        c.seed = cfg.seed + static_cast<std::uint64_t>(r) * seed_stride;
        out[r] = run_simulation(c, tables);
      } catch (...) {
        std::lock_guard lk(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(n_reps));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(std::move(out));
}

}  // namespace beamsched
