#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/model.hpp"

namespace beamsched {

/// Numerical knobs of the single-user solvers. `rvi_tol` is relative: a
/// sweep stops once span(TV - V) <= rvi_tol * cost_scale, where cost_scale is
/// max(1, max |stage cost|).
struct SolverKnobs {
  double rvi_tol = 1e-11;
  long rvi_max_iter = 5'000'000;
  double discount = 0.999;
  double linear_solve_pivot_tol = 1e-13;

  void validate() const {
    if (!(rvi_tol > 0.0)) throw ValidationError("rvi_tol must be positive");
    if (rvi_max_iter <= 0) throw ValidationError("rvi_max_iter must be positive");
    if (!(discount > 0.0 && discount < 1.0)) throw ValidationError("discount must lie in (0,1)");
    if (!(linear_solve_pivot_tol > 0.0)) throw ValidationError("linear_solve_pivot_tol must be positive");
  }

  friend bool operator==(const SolverKnobs&, const SolverKnobs&) = default;
};

/// Largest t with actions[x] passive for x <= t and active for x > t, or
/// nullopt when the map is not of threshold type. Only the first `limit`
/// entries are inspected when `limit` is given.
inline std::optional<int> extract_threshold(std::span<const Action> actions,
                                            std::optional<std::size_t> limit = std::nullopt) {
  const std::size_t n = limit ? std::min(*limit, actions.size()) : actions.size();
  std::size_t x = 0;
  while (x < n && actions[x] == Action::Passive) ++x;
  const int t = static_cast<int>(x) - 1;
  for (; x < n; ++x)
    if (actions[x] != Action::Active) return std::nullopt;
  return t;
}

inline std::vector<Action> threshold_actions(int t, int max_state) {
  std::vector<Action> a(max_state + 1);
  for (int x = 0; x <= max_state; ++x) a[x] = x > t ? Action::Active : Action::Passive;
  return a;
}

inline double cost_scale(const UserModel& m, double tax) {
  double s = std::max(std::abs(m.params().beam_cost), std::abs(tax));
  for (double h : m.holding_table()) s = std::max(s, std::abs(h));
  return std::max(1.0, s);
}

/// Solution of the average-cost optimality equation for one tax value.
struct ValueSolution {
  double tax = 0.0;
  std::vector<double> values;  // V(0) = 0
  double avg_cost = 0.0;
  std::vector<Action> actions;  // argmin per state, ties to passive
  std::optional<int> threshold;  // nullopt: not a threshold map
  long iterations = 0;
  double residual = 0.0;  // absolute span of TV - V at exit
  double scale = 1.0;
};

namespace detail {

struct QPair {
  double active;
  double passive;
};

// Right-hand sides of the optimality equation at x, without the -eta term.
inline QPair q_values(const UserModel& m, std::span<const double> v, int x, double tax) {
  return {m.stage_cost(x, Action::Active, tax) + v[x] + m.expected_increment(v, x, Action::Active),
          m.stage_cost(x, Action::Passive, tax) + v[x] + m.expected_increment(v, x, Action::Passive)};
}

inline Action argmin_action(const QPair& q) { return q.active < q.passive ? Action::Active : Action::Passive; }

}  // namespace detail

/// Span of the Bellman residual of (V, eta) against the optimality equation.
inline double bellman_residual(const UserModel& m, std::span<const double> v, double eta, double tax) {
  double worst = 0.0;
  for (int x = 0; x <= m.max_state(); ++x) {
    const auto q = detail::q_values(m, v, x, tax);
    worst = std::max(worst, std::abs(std::min(q.active, q.passive) - eta - v[x]));
  }
  return worst;
}

/// Relative value iteration for the tax-parameterised average-cost problem.
/// V is renormalised to V(0) = 0 after every sweep.
inline ValueSolution relative_value_iteration(double tax, const UserModel& m, const SolverKnobs& knobs,
                                              const std::vector<double>* warm_start = nullptr) {
  knobs.validate();
  const int n = m.num_states();
  ValueSolution sol;
  sol.tax = tax;
  sol.scale = cost_scale(m, tax);
  std::vector<double> v(n, 0.0), tv(n);
  if (warm_start && static_cast<int>(warm_start->size()) == n) {
    v = *warm_start;
    const double v0 = v[0];
    for (double& e : v) e -= v0;
  }
  const double tol = knobs.rvi_tol * sol.scale;
  double span = std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = 0.0;
  long it = 0;
  for (; it < knobs.rvi_max_iter; ++it) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (int x = 0; x < n; ++x) {
      const auto q = detail::q_values(m, v, x, tax);
      tv[x] = std::min(q.active, q.passive);
      const double diff = tv[x] - v[x];
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
    }
    span = hi - lo;
    const double t0 = tv[0];
    for (int x = 0; x < n; ++x) v[x] = tv[x] - t0;
    if (span <= tol) break;
  }
  if (span > tol)
    throw SolverError(SolverError::Kind::NoConvergence,
                      "relative value iteration did not converge (span " + std::to_string(span) + ")", span);
  sol.values = std::move(v);
  sol.actions.resize(n);
  for (int x = 0; x < n; ++x) sol.actions[x] = detail::argmin_action(detail::q_values(m, sol.values, x, tax));
  // Bounds lo <= eta <= hi hold at the last sweep; report the midpoint.
  sol.avg_cost = 0.5 * (lo + hi);
  sol.residual = bellman_residual(m, sol.values, sol.avg_cost, tax);
  sol.iterations = it + 1;
  sol.threshold = extract_threshold(sol.actions);
  return sol;
}

struct DiscountedSolution {
  std::vector<double> values;
  double v0 = 0.0;
  long iterations = 0;
};

/// Value iteration for the discounted problem with discount `gamma`.
inline DiscountedSolution discounted_value_iteration(double tax, double gamma, const UserModel& m,
                                                     const SolverKnobs& knobs) {
  knobs.validate();
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("discount must lie in (0,1)");
  const int n = m.num_states();
  // Iterate on W = V - V(0) with the (1-gamma) V(0) drift tracked separately;
  // this is the same fixed point but avoids carrying the 1/(1-gamma) offset.
  std::vector<double> w(n, 0.0), tw(n);
  double drift = 0.0;  // converges to (1-gamma) V(0)
  const double tol = knobs.rvi_tol * cost_scale(m, tax);
  double change = std::numeric_limits<double>::infinity();
  long it = 0;
  for (; it < knobs.rvi_max_iter && change > tol; ++it) {
    for (int x = 0; x < n; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (Action u : {Action::Active, Action::Passive})
        best = std::min(best, m.stage_cost(x, u, tax) + gamma * (w[x] + m.expected_increment(w, x, u)));
      tw[x] = best;
    }
    const double new_drift = tw[0];
    change = 0.0;
    for (int x = 0; x < n; ++x) {
      const double nw = tw[x] - new_drift;
      change = std::max(change, std::abs(nw - w[x]));
      w[x] = nw;
    }
    change = std::max(change, std::abs(new_drift - drift));
    drift = new_drift;
  }
  if (change > tol)
    throw SolverError(SolverError::Kind::NoConvergence, "discounted value iteration did not converge", change);
  // W solves W(x) = min_u [c + gamma E W(next)] - drift with W(0)=0, so
  // V = W + V(0) where V(0) = drift / (1 - gamma).
  DiscountedSolution out;
  out.v0 = drift / (1.0 - gamma);
  out.values.resize(n);
  for (int x = 0; x < n; ++x) out.values[x] = w[x] + out.v0;
  out.iterations = it;
  return out;
}

struct PolicyValue {
  std::vector<double> values;  // V(0) = 0
  double avg_cost = 0.0;
};

namespace detail {

// Lowest state of the single recurrent class: every state with no downward
// move (state 0, passive states) is a barrier, and only the top one is
// revisited.
inline int lowest_recurrent_state(std::span<const Action> actions, const UserModel& m) {
  int low = 0;
  for (int y = 1; y <= m.max_state(); ++y)
    if (m.p_down(y, actions[y]) == 0.0) low = y;
  return low;
}

// Log of the unnormalised stationary weights on {low, ..., N} with weight 1
// at `low`, from detailed balance pi(y) up(y) = pi(y+1) down(y+1).
inline std::vector<long double> log_weights(std::span<const Action> actions, const UserModel& m, int low) {
  std::vector<long double> lw(m.max_state() - low + 1, 0.0L);
  for (int y = low; y < m.max_state(); ++y) {
    const long double up = m.p_up(y, actions[y]);
    const long double dn = m.p_down(y + 1, actions[y + 1]);
    lw[y - low + 1] = lw[y - low] + std::log(up) - std::log(dn);
  }
  return lw;
}

inline long double log_sum_exp(std::span<const long double> lw) {
  long double mx = *std::max_element(lw.begin(), lw.end());
  long double s = 0.0L;
  for (long double e : lw) s += std::exp(e - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// Exact evaluation of a stationary deterministic policy: solves
///   V(y) = c(y) - eta + sum_z p(z|y) V(z),  V(0) = 0
/// for (V, eta) directly in O(N).
///
/// With D(y) = V(y+1) - V(y) the equations read
///   down(y) D(y-1) - up(y) D(y) = c(y) - eta.
/// eta is the stationary mean cost. On the recurrent class detailed balance
/// telescopes them into pi(y) up(y) D(y) = sum_{z<=y} pi(z) (eta - c(z))
/// = -sum_{z>y} pi(z) (eta - c(z)); whichever side has the smaller absolute
/// mass is used. Transient states below the class are filled upward from
/// state 0.
inline PolicyValue evaluate_policy(std::span<const Action> actions, double tax, const UserModel& m,
                                   const SolverKnobs& knobs) {
  const int big_n = m.max_state();
  if (static_cast<int>(actions.size()) != big_n + 1) throw ValidationError("action map must cover {0..N}");
  for (int y = 0; y < big_n; ++y) {
    const double up = m.p_up(y, actions[y]);
    if (up < knobs.linear_solve_pivot_tol)
      throw SolverError(SolverError::Kind::SingularSystem, "fixed-policy system is singular at state " +
                                                               std::to_string(y), up);
  }
  auto c = [&](int y) { return m.stage_cost(y, actions[y], tax); };
  const int low = detail::lowest_recurrent_state(actions, m);
  const auto lw = detail::log_weights(actions, m, low);
  const long double lz = detail::log_sum_exp(lw);
  const long double mx = *std::max_element(lw.begin(), lw.end());

  long double eta_acc = 0.0L;
  for (int y = low; y <= big_n; ++y) eta_acc += std::exp(lw[y - low] - lz) * static_cast<long double>(c(y));
  const long double eta = eta_acc;

  std::vector<long double> diff(big_n, 0.0L);
  // Prefix and suffix sums of scaled weighted deviations, each accumulated
  // directly so that small tails are not formed by subtraction.
  const int len = big_n - low + 1;
  std::vector<long double> term(len);
  for (int k = 0; k < len; ++k) term[k] = std::exp(lw[k] - mx) * (eta - c(low + k));
  std::vector<long double> pre(len + 1, 0.0L), pre_abs(len + 1, 0.0L), suf(len + 1, 0.0L), suf_abs(len + 1, 0.0L);
  for (int k = 0; k < len; ++k) {
    pre[k + 1] = pre[k] + term[k];
    pre_abs[k + 1] = pre_abs[k] + std::abs(term[k]);
  }
  for (int k = len - 1; k >= 0; --k) {
    suf[k] = suf[k + 1] + term[k];
    suf_abs[k] = suf_abs[k + 1] + std::abs(term[k]);
  }
  for (int y = low; y < big_n; ++y) {
    const int k = y - low;
    const long double lower = pre[k + 1];
    const long double upper = -suf[k + 1];
    const long double lower_mass = pre_abs[k + 1];
    const long double upper_mass = suf_abs[k + 1];
    const long double num = lower_mass <= upper_mass ? lower : upper;
    diff[y] = num * std::exp(mx - lw[k]) / static_cast<long double>(m.p_up(y, actions[y]));
  }
  for (int y = 0; y < low; ++y) {
    const long double prev = y > 0 ? diff[y - 1] : 0.0L;
    diff[y] = (static_cast<long double>(m.p_down(y, actions[y])) * prev + eta - c(y)) /
              static_cast<long double>(m.p_up(y, actions[y]));
  }
  PolicyValue pv;
  pv.avg_cost = static_cast<double>(eta);
  pv.values.assign(big_n + 1, 0.0);
  long double acc = 0.0L;
  for (int y = 0; y < big_n; ++y) {
    acc += diff[y];
    pv.values[y + 1] = static_cast<double>(acc);
  }
  return pv;
}

/// Threshold policy (passive on {0..t}, active above) evaluated exactly.
inline PolicyValue solve_fixed_threshold(double tax, int t, const UserModel& m, const SolverKnobs& knobs) {
  if (t < -1 || t > m.max_state()) throw ValidationError("threshold out of range");
  const auto actions = threshold_actions(t, m.max_state());
  return evaluate_policy(actions, tax, m, knobs);
}

/// Largest absolute residual of the fixed-policy equations.
inline double policy_equation_residual(std::span<const Action> actions, double tax, const UserModel& m,
                                       const PolicyValue& pv) {
  double worst = std::abs(pv.values[0]);
  for (int y = 0; y <= m.max_state(); ++y) {
    const double rhs =
        m.stage_cost(y, actions[y], tax) - pv.avg_cost + pv.values[y] + m.expected_increment(pv.values, y, actions[y]);
    worst = std::max(worst, std::abs(pv.values[y] - rhs));
  }
  return worst;
}

/// Howard policy iteration with exact evaluation. Used where many solves are
/// needed (index tables); relative_value_iteration remains the reference.
inline ValueSolution policy_iteration(double tax, const UserModel& m, const SolverKnobs& knobs,
                                      std::vector<Action> start = {}) {
  const int n = m.num_states();
  if (static_cast<int>(start.size()) != n) start = threshold_actions(0, m.max_state());
  ValueSolution sol;
  sol.tax = tax;
  sol.scale = cost_scale(m, tax);
  const double eps = 1e-12 * sol.scale;
  std::vector<Action> act = std::move(start);
  PolicyValue pv;
  long it = 0;
  for (;; ++it) {
    pv = evaluate_policy(act, tax, m, knobs);
    bool changed = false;
    for (int x = 0; x < n; ++x) {
      const auto q = detail::q_values(m, pv.values, x, tax);
      Action next = act[x];
      if (q.active < q.passive - eps)
        next = Action::Active;
      else if (q.passive < q.active - eps)
        next = Action::Passive;
      if (next != act[x]) {
        act[x] = next;
        changed = true;
      }
    }
    if (!changed) break;
    if (it > 10 * n + 100)
      throw SolverError(SolverError::Kind::NoConvergence, "policy iteration cycled");
  }
  sol.values = std::move(pv.values);
  sol.avg_cost = pv.avg_cost;
  sol.actions = std::move(act);
  sol.iterations = it + 1;
  sol.residual = bellman_residual(m, sol.values, sol.avg_cost, tax);
  sol.threshold = extract_threshold(sol.actions);
  return sol;
}

/// Stationary law of the chain induced by a threshold policy.
struct StationaryDistribution {
  std::vector<double> probs;
  int threshold = -1;
  bool degenerate = false;  // t = N: point mass at N
};


/// Stationary distribution of the birth-death chain induced by an arbitrary
/// policy, from the product formula pi(y+1)/pi(y) = up(y)/down(y+1) on the
/// recurrent class; transient states get zero mass.
inline std::vector<double> stationary_of_policy(std::span<const Action> actions, const UserModel& m) {
  const int low = detail::lowest_recurrent_state(actions, m);
  const auto lw = detail::log_weights(actions, m, low);
  const long double lz = detail::log_sum_exp(lw);
  std::vector<double> pi(m.num_states(), 0.0);
  for (std::size_t k = 0; k < lw.size(); ++k) pi[low + k] = static_cast<double>(std::exp(lw[k] - lz));
  return pi;
}

inline StationaryDistribution stationary_distribution(int t, const UserModel& m) {
  if (t < -1 || t > m.max_state()) throw ValidationError("threshold out of range");
  StationaryDistribution sd;
  sd.threshold = t;
  if (t == m.max_state()) {
    sd.degenerate = true;
    sd.probs.assign(m.num_states(), 0.0);
    sd.probs.back() = 1.0;
    return sd;
  }
  const auto actions = threshold_actions(t, m.max_state());
  sd.probs = stationary_of_policy(actions, m);
  return sd;
}

/// Sum_{q <= t} v_t(q): stationary mass of the passive set.
inline double passive_mass(int t, const UserModel& m) {
  if (t < 0) return 0.0;
  const auto sd = stationary_distribution(t, m);
  double s = 0.0;
  for (int q = 0; q <= t; ++q) s += sd.probs[q];
  return s;
}

/// Sign of passive_mass(t+1) - passive_mass(t) for 0 <= t < N-1, computed
/// without cancellation, together with log of its magnitude.
///
/// For t >= 0 the passive states below t are transient, so the passive mass
/// is 1/Z_t with Z_t the sum of the weights anchored at t. Z_t - Z_{t+1} is
/// accumulated term by term on the aligned weights; those terms cancel
/// exactly except the top one, and the increment is of
/// order r^(N-t) which is far below double resolution of the masses.
struct MassIncrement {
  int sign = 0;
  long double log_abs = -std::numeric_limits<long double>::infinity();
};

inline MassIncrement passive_mass_increment(int t, const UserModel& m) {
  const int big_n = m.max_state();
  if (t < -1 || t >= big_n - 1) throw ValidationError("passive_mass_increment needs -1 <= t < N-1");
  if (t == -1) return {1, std::log(static_cast<long double>(passive_mass(0, m)))};
  const auto a0 = threshold_actions(t, big_n);
  const auto a1 = threshold_actions(t + 1, big_n);
  const auto lw0 = detail::log_weights(a0, m, t);      // states t..N
  const auto lw1 = detail::log_weights(a1, m, t + 1);  // states t+1..N
  const long double l0 = detail::log_sum_exp(lw0);
  const long double l1 = detail::log_sum_exp(lw1);
  long double mx = std::max(*std::max_element(lw0.begin(), lw0.end()), *std::max_element(lw1.begin(), lw1.end()));
  long double diff = 0.0L;  // (Z_t - Z_{t+1}) * exp(-mx)
  for (std::size_t k = 0; k < lw1.size(); ++k) diff += std::exp(lw0[k] - mx) - std::exp(lw1[k] - mx);
  diff += std::exp(lw0.back() - mx);
  MassIncrement inc;
  if (diff == 0.0L) return inc;
  inc.sign = diff > 0 ? 1 : -1;
  inc.log_abs = std::log(std::abs(diff)) + mx - l0 - l1;
  return inc;
}

/// Average cost of the threshold policy t under tax `tax`:
///   sum_j H(j) v_t(j) + tax * sum_{j<=t} v_t(j) + P * sum_{j>t} v_t(j).
inline double threshold_average_cost(double tax, int t, const UserModel& m) {
  const auto sd = stationary_distribution(t, m);
  if (sd.degenerate)
    throw SolverError(SolverError::Kind::DegenerateChain, "threshold N gives an absorbing chain");
  double hold = 0.0, passive = 0.0, active = 0.0;
  for (int j = 0; j <= m.max_state(); ++j) {
    hold += m.holding(j) * sd.probs[j];
    (j <= t ? passive : active) += sd.probs[j];
  }
  return hold + tax * passive + m.params().beam_cost * active;
}

}  // namespace beamsched
