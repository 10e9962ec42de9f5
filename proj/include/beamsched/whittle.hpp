#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/mdp.hpp"
#include "beamsched/model.hpp"

namespace beamsched {

/// How index tables are filled.
///  - FixedPoint: damped iteration lambda <- lambda + step * bracket on the
///    threshold-x linear system, then interpolation and a monotone clamp.
///  - Bisection: the tax at which the optimal action at x flips, located by
///    bisection over an exact policy-iteration solve.
enum class IndexMethod { FixedPoint, Bisection };

inline const char* to_string(IndexMethod m) { return m == IndexMethod::FixedPoint ? "fixed_point" : "bisection"; }

inline IndexMethod index_method_from_string(const std::string& s) {
  if (s == "fixed_point") return IndexMethod::FixedPoint;
  if (s == "bisection") return IndexMethod::Bisection;
  throw ValidationError("unknown index method '" + s + "'");
}

struct IndexKnobs {
  double step = 0.1;
  double lambda_init = 0.0;
  double fp_tol = 1e-7;
  long fp_max_iter = 200'000;
  int sample_stride = 1;
  IndexMethod method = IndexMethod::Bisection;
  double bisection_tol = 1e-9;  // relative to max(1, |index|)

  void validate() const {
    if (!(step > 0.0)) throw ValidationError("index step must be positive");
    if (!(fp_tol > 0.0)) throw ValidationError("fp_tol must be positive");
    if (fp_max_iter <= 0) throw ValidationError("fp_max_iter must be positive");
    if (sample_stride < 1) throw ValidationError("sample_stride must be >= 1");
    if (!(bisection_tol > 0.0)) throw ValidationError("bisection_tol must be positive");
  }

  friend bool operator==(const IndexKnobs&, const IndexKnobs&) = default;
};

/// Active-minus-passive difference of the two optimality-equation branches
/// at x for value function v and tax `tax`:
///   [P + sum p_act(j|x) V(j)] - [tax + sum p_pas(j|x) V(j)].
inline double branch_gap(const UserModel& m, std::span<const double> v, int x, double tax) {
  return m.params().beam_cost - tax + m.expected_increment(v, x, Action::Active) -
         m.expected_increment(v, x, Action::Passive);
}

struct IterationResult {
  double index = 0.0;
  long iterations = 0;
  double last_step = 0.0;  // |lambda_{k+1} - lambda_k| at exit
  double gap = 0.0;        // branch gap at the returned tax
};

/// Damped fixed-point iteration for the index of state x. Each step solves
/// the linear system of the threshold policy with passive set {0..x} at the
/// current tax and moves the tax by `step` times the branch gap.
inline IterationResult index_iteration(int x, const UserModel& m, const IndexKnobs& k, const SolverKnobs& solver) {
  k.validate();
  if (x < 0 || x > m.max_state()) throw ValidationError("state out of range");
  if (x == m.max_state())
    throw SolverError(SolverError::Kind::DegenerateChain,
                      "passive set {0..N} makes the chain absorbing; no index at the full buffer");
  IterationResult r;
  double lambda = k.lambda_init;
  for (long it = 0; it < k.fp_max_iter; ++it) {
    const auto pv = solve_fixed_threshold(lambda, x, m, solver);
    const double gap = branch_gap(m, pv.values, x, lambda);
    const double next = lambda + k.step * gap;
    r.iterations = it + 1;
    r.last_step = std::abs(next - lambda);
    if (!std::isfinite(next))
      throw SolverError(SolverError::Kind::NoConvergence, "index iteration diverged at state " + std::to_string(x));
    lambda = next;
    if (r.last_step <= k.fp_tol) {
      r.index = lambda;
      r.gap = branch_gap(m, solve_fixed_threshold(lambda, x, m, solver).values, x, lambda);
      return r;
    }
  }
  throw SolverError(SolverError::Kind::NoConvergence,
                    "index iteration did not converge at state " + std::to_string(x) + " (last step " +
                        std::to_string(r.last_step) + ")",
                    r.last_step);
}

/// Interval known to contain a flip tax. `complete` is false when the
/// predicate could not be evaluated before the requested width was reached.
struct FlipBracket {
  double lo = 0.0;
  double hi = 0.0;
  bool complete = true;

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

namespace detail {

// Bisection for the flip point of a predicate that is false (passive) at low
// tax and true (active) at high tax. `is_active` may keep state between calls.
// A NoConvergence from the predicate inside the bracket ends the search early.
template <class Pred>
FlipBracket bisect_flip(const UserModel& m, Pred&& is_active, double tol_abs, double tol_rel) {
  const auto& p = m.params();
  const double half = p.beam_cost + p.holding_coeff * double(p.buffer_size) * double(p.buffer_size);
  double lo = -half, hi = half;
  double width = hi - lo;
  int expansions = 0;
  while (is_active(lo)) {
    if (++expansions > 200) throw SolverError(SolverError::Kind::BracketFailure, "no passive tax found");
    hi = lo;
    width *= 2.0;
    lo -= width;
  }
  while (!is_active(hi)) {
    if (++expansions > 200) throw SolverError(SolverError::Kind::BracketFailure, "no active tax found");
    lo = hi;
    width *= 2.0;
    hi += width;
  }
  FlipBracket b{lo, hi, true};
  while (b.width() > std::max(tol_abs, tol_rel * std::max(1.0, std::max(std::abs(b.lo), std::abs(b.hi))))) {
    const double mid = b.mid();
    if (mid <= b.lo || mid >= b.hi) break;
    bool act = false;
    try {
      act = is_active(mid);
    } catch (const SolverError& e) {
      if (e.kind() != SolverError::Kind::NoConvergence) throw;
      b.complete = false;
      break;
    }
    (act ? b.hi : b.lo) = mid;
  }
  return b;
}

}  // namespace detail

/// Bracket of the index of state x from bisection on "the relative value
/// iteration optimal action at x is active". Independent of the damped
/// iteration. Close to the flip tax two policies with different recurrent
/// classes nearly tie and value iteration slows down without bound; the
/// search then stops with `complete == false`.
inline FlipBracket index_bisection_bracket(int x, const UserModel& m, const SolverKnobs& solver, double tol) {
  if (x < 0 || x > m.max_state()) throw ValidationError("state out of range");
  std::vector<double> warm;
  auto active = [&](double tax) {
    auto sol = relative_value_iteration(tax, m, solver, warm.empty() ? nullptr : &warm);
    warm = sol.values;
    return sol.actions[x] == Action::Active;
  };
  return detail::bisect_flip(m, active, tol, 0.0);
}

inline double index_bisection_oracle(int x, const UserModel& m, const SolverKnobs& solver, double tol) {
  const auto b = index_bisection_bracket(x, m, solver, tol);
  if (!b.complete)
    throw SolverError(SolverError::Kind::NoConvergence,
                      "bisection stopped at width " + std::to_string(b.width()) + " for state " + std::to_string(x),
                      b.width());
  return b.mid();
}

/// Same flip point, located with exact policy iteration; fast enough for
/// full tables at buffer sizes in the hundreds.
inline double index_by_policy_iteration(int x, const UserModel& m, const SolverKnobs& solver, double tol_rel) {
  if (x < 0 || x > m.max_state()) throw ValidationError("state out of range");
  std::vector<Action> warm;
  auto active = [&](double tax) {
    auto sol = policy_iteration(tax, m, solver, warm);
    warm = sol.actions;
    return sol.actions[x] == Action::Active;
  };
  const auto b = detail::bisect_flip(m, active, 0.0, tol_rel);
  if (!b.complete) throw SolverError(SolverError::Kind::NoConvergence, "policy iteration failed inside the bracket");
  return b.mid();
}

struct WhittleTable {
  int user_id = 0;
  std::vector<std::pair<int, double>> anchors;
  std::vector<double> full;  // index for every state 0..N

  int max_state() const { return static_cast<int>(full.size()) - 1; }

  friend bool operator==(const WhittleTable&, const WhittleTable&) = default;
};

inline double lookup_index(const WhittleTable& table, int x) {
  if (x < 0 || x >= static_cast<int>(table.full.size())) throw ValidationError("lookup_index: state out of range");
  return table.full[x];
}

/// Anchor states {0, s, 2s, ...} plus the last computable state.
inline std::vector<int> anchor_states(int stride, int last) {
  std::vector<int> xs;
  for (int x = 0; x <= last; x += stride) xs.push_back(x);
  if (xs.back() != last) xs.push_back(last);
  return xs;
}

/// Linear interpolation between anchors; `full` must have anchor values set.
inline void interpolate_between_anchors(std::vector<double>& full, const std::vector<std::pair<int, double>>& anchors) {
  for (std::size_t i = 0; i + 1 < anchors.size(); ++i) {
    const auto [x1, v1] = anchors[i];
    const auto [x2, v2] = anchors[i + 1];
    for (int x = x1; x <= x2; ++x) {
      const double w = double(x - x1) / double(x2 - x1);
      full[x] = (x == x2) ? v2 : v1 + w * (v2 - v1);
    }
  }
}

/// Builds the per-user table. With the fixed-point method the last anchor is
/// N-1 and state N copies it; with bisection the anchors run to N. Anchor
/// values are clamped to a running minimum over increasing states and the
/// rest is filled by linear interpolation, so the table is non-increasing and
/// passes through every stored anchor.
inline WhittleTable build_index_table(const UserModel& m, const IndexKnobs& k, const SolverKnobs& solver,
                                      int user_id = 0) {
  k.validate();
  const int big_n = m.max_state();
  WhittleTable t;
  t.user_id = user_id;
  t.full.assign(big_n + 1, 0.0);
  const bool fixed = k.method == IndexMethod::FixedPoint;
  const int last = fixed ? big_n - 1 : big_n;
  for (int x : anchor_states(k.sample_stride, last)) {
    double v = 0.0;
    try {
      v = fixed ? index_iteration(x, m, k, solver).index : index_by_policy_iteration(x, m, solver, k.bisection_tol);
    } catch (const SolverError& e) {
      throw SolverError(e.kind(), "user " + std::to_string(user_id) + ", state " + std::to_string(x) + ": " + e.what(),
                        e.residual());
    }
    if (!t.anchors.empty()) v = std::min(v, t.anchors.back().second);
    t.anchors.emplace_back(x, v);
  }
  if (fixed) t.anchors.emplace_back(big_n, t.anchors.back().second);
  interpolate_between_anchors(t.full, t.anchors);
  return t;
}

/// Text form: a header line, then one "state index anchor_flag" line per
/// state, values with 12 significant digits.
inline void write_table(std::ostream& os, const WhittleTable& t) {
  os << "# whittle-table user=" << t.user_id << " states=" << t.full.size() << '\n';
  std::size_t next_anchor = 0;
  char buf[64];
  for (std::size_t x = 0; x < t.full.size(); ++x) {
    const bool is_anchor = next_anchor < t.anchors.size() && t.anchors[next_anchor].first == static_cast<int>(x);
    if (is_anchor) ++next_anchor;
    std::snprintf(buf, sizeof buf, "%.12g", t.full[x]);
    os << x << ' ' << buf << ' ' << (is_anchor ? 1 : 0) << '\n';
  }
}

inline WhittleTable read_table(std::istream& is) {
  WhittleTable t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# whittle-table", 0) != 0) throw ParseError("missing whittle-table header");
  const auto pos = line.find("user=");
  if (pos == std::string::npos) throw ParseError("whittle-table header lacks user=");
  t.user_id = std::stoi(line.substr(pos + 5));
  int expect = 0;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    int x = 0, flag = 0;
    double v = 0.0;
    if (!(ls >> x >> v >> flag) || x != expect)
      throw ParseError("whittle-table line " + std::to_string(lineno) + ": malformed");
    t.full.push_back(v);
    if (flag) t.anchors.emplace_back(x, v);
    ++expect;
  }
  if (t.full.empty()) throw ParseError("whittle-table has no rows");
  return t;
}

}  // namespace beamsched
