#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "beamsched/error.hpp"

namespace beamsched {

/// Parameters of one user's queue: arrival and good-channel probabilities,
/// beam cost, quadratic holding-cost coefficient and buffer size. The state
/// space of the user's queue is {0, ..., buffer_size}.
struct UserParams {
  double arrival_prob = 0.5;
  double channel_prob = 0.5;
  double beam_cost = 1.0;
  double holding_coeff = 1.0;
  int buffer_size = 100;

  int max_state() const noexcept { return buffer_size; }
  int num_states() const noexcept { return buffer_size + 1; }

  void validate() const {
    if (!(arrival_prob > 0.0 && arrival_prob < 1.0))
      throw ValidationError("arrival_prob must lie in (0,1)");
    if (!(channel_prob > 0.0 && channel_prob < 1.0))
      throw ValidationError("channel_prob must lie in (0,1)");
    if (!(beam_cost > 0.0) || !std::isfinite(beam_cost))
      throw ValidationError("beam_cost must be positive");
    if (!(holding_coeff >= 0.0) || !std::isfinite(holding_coeff))
      throw ValidationError("holding_coeff must be non-negative");
    if (buffer_size < 1) throw ValidationError("buffer_size must be >= 1");
  }

  friend bool operator==(const UserParams&, const UserParams&) = default;
};

enum class Action : std::uint8_t { Passive = 0, Active = 1 };

enum class PolicyKind { Whittle, LQF, MWS, WFQ, Random };

inline constexpr std::array<PolicyKind, 5> kAllPolicies = {
    PolicyKind::Whittle, PolicyKind::LQF, PolicyKind::MWS, PolicyKind::WFQ, PolicyKind::Random};

inline std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::Whittle: return "whittle";
    case PolicyKind::LQF: return "lqf";
    case PolicyKind::MWS: return "mws";
    case PolicyKind::WFQ: return "wfq";
    case PolicyKind::Random: return "random";
  }
  return "?";
}

inline PolicyKind policy_from_string(std::string_view s) {
  for (auto p : kAllPolicies)
    if (to_string(p) == s) return p;
  throw ValidationError("unknown policy '" + std::string(s) + "'");
}

/// One row of the single-user transition kernel. Entries are ordered by
/// next state; at most three, each within one step of the origin.
struct TransitionRow {
  struct Entry {
    int next_state;
    double prob;
  };
  std::array<Entry, 3> entries{};
  int size = 0;

  std::span<const Entry> view() const { return {entries.data(), static_cast<std::size_t>(size)}; }

  double prob_of(int state) const {
    for (const auto& e : view())
      if (e.next_state == state) return e.prob;
    return 0.0;
  }

  double total() const {
    double s = 0.0;
    for (const auto& e : view()) s += e.prob;
    return s;
  }

  void add(int next, double prob) {
    if (prob == 0.0) return;
    for (int i = 0; i < size; ++i) {
      if (entries[i].next_state == next) {
        entries[i].prob += prob;
        return;
      }
    }
    int i = size++;
    entries[i] = {next, prob};
    while (i > 0 && entries[i - 1].next_state > entries[i].next_state) {
      std::swap(entries[i - 1], entries[i]);
      --i;
    }
  }
};

/// Queue update for one slot: departure (if served over a good channel),
/// then arrival; arrivals to a full buffer are dropped.
inline int step_queue(int x, int u, int s, int arr, int n_buf) {
  if (n_buf < 1) throw ValidationError("buffer size must be >= 1");
  if (x < 0 || x > n_buf) throw ValidationError("queue length out of range");
  if ((u != 0 && u != 1) || (s != 0 && s != 1) || (arr != 0 && arr != 1))
    throw ValidationError("action, channel and arrival must be binary");
  int after = x - s * u;
  if (after < 0) after = 0;
  after += arr;
  return after > n_buf ? n_buf : after;
}

/// Marginalises the channel and arrival randomness of step_queue.
inline TransitionRow transition_row(int x, int u, const UserParams& p) {
  if (x < 0 || x > p.buffer_size) throw ValidationError("state out of range");
  if (u != 0 && u != 1) throw ValidationError("action must be binary");
  const double a = p.arrival_prob;
  const double d = p.channel_prob;
  TransitionRow row;
  for (int s = 0; s <= 1; ++s) {
    const double ps = s ? d : 1.0 - d;
    for (int arr = 0; arr <= 1; ++arr) {
      const double pa = arr ? a : 1.0 - a;
      row.add(step_queue(x, u, s, arr, p.buffer_size), ps * pa);
    }
  }
  return row;
}

inline double holding_cost(int x, const UserParams& p) {
  if (x < 0 || x > p.buffer_size) throw ValidationError("state out of range");
  return p.holding_coeff * static_cast<double>(x) * static_cast<double>(x);
}

inline std::vector<double> quadratic_holding_table(const UserParams& p) {
  std::vector<double> h(p.num_states());
  for (int x = 0; x <= p.buffer_size; ++x) h[x] = holding_cost(x, p);
  return h;
}

/// Total cost of one slot: holding cost of every queue plus the beam cost of
/// every served user.
inline double slot_cost(std::span<const int> states, std::span<const int> actions,
                        std::span<const UserParams> params) {
  if (states.size() != actions.size() || states.size() != params.size())
    throw ValidationError("slot_cost: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (actions[i] != 0 && actions[i] != 1) throw ValidationError("actions must be binary");
    total += holding_cost(states[i], params[i]) + params[i].beam_cost * actions[i];
  }
  return total;
}

/// Birth-death view of one user's controlled chain together with its
/// tabulated holding cost. The solvers work on this rather than on
/// UserParams so that a different convex table can be substituted.
class UserModel {
 public:
  UserModel(const UserParams& p)  // NOLINT(google-explicit-constructor)
      : UserModel(p, quadratic_holding_table(p)) {}

  UserModel(const UserParams& p, std::vector<double> holding) : params_(p), holding_(std::move(holding)) {
    p.validate();
    if (static_cast<int>(holding_.size()) != p.num_states())
      throw ValidationError("holding table must cover {0..N}");
    const int n = p.num_states();
    for (int u = 0; u <= 1; ++u) {
      down_[u].resize(n);
      stay_[u].resize(n);
      up_[u].resize(n);
      for (int x = 0; x < n; ++x) {
        const auto row = transition_row(x, u, p);
        down_[u][x] = row.prob_of(x - 1);
        up_[u][x] = row.prob_of(x + 1);
        stay_[u][x] = row.prob_of(x);
      }
    }
  }

  const UserParams& params() const noexcept { return params_; }
  int max_state() const noexcept { return params_.buffer_size; }
  int num_states() const noexcept { return params_.buffer_size + 1; }

  double holding(int x) const { return holding_[x]; }
  std::span<const double> holding_table() const { return holding_; }

  double p_down(int x, Action u) const { return down_[idx(u)][x]; }
  double p_stay(int x, Action u) const { return stay_[idx(u)][x]; }
  double p_up(int x, Action u) const { return up_[idx(u)][x]; }

  /// Per-stage cost under tax `tax`: H(x)+P when active, H(x)+tax when passive.
  double stage_cost(int x, Action u, double tax) const {
    return holding_[x] + (u == Action::Active ? params_.beam_cost : tax);
  }

  /// E[V(next)] - V(x) under action u; differencing keeps precision when V is large.
  double expected_increment(std::span<const double> v, int x, Action u) const {
    double s = 0.0;
    if (x > 0) s += p_down(x, u) * (v[x - 1] - v[x]);
    if (x < max_state()) s += p_up(x, u) * (v[x + 1] - v[x]);
    return s;
  }

 private:
  static int idx(Action u) { return u == Action::Active ? 1 : 0; }

  UserParams params_;
  std::vector<double> holding_;
  std::array<std::vector<double>, 2> down_, stay_, up_;
};

}  // namespace beamsched
