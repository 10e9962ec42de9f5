#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/mdp.hpp"
#include "beamsched/model.hpp"
#include "beamsched/whittle.hpp"

namespace beamsched {

/// Sampling grid for the structural property suite.
struct VerifyGrid {
  std::uint64_t seed = 20240601;
  int tuples = 20;
  int lambda_points = 15;
  int buffer_size = 60;
  int boundary_margin = 5;
  double slack = 1e-8;  // relative to max |V| of the solution being checked
  double a_lo = 0.1, a_hi = 0.9;
  double d_lo = 0.1, d_hi = 0.9;
  double p_lo = 1.0, p_hi = 200.0;
  double q_lo = 1.0, q_hi = 100.0;
  int discount_samples = 5;
  double discount_tol = 0.1;
  int index_sets = 10;
  std::vector<int> index_states{0, 1, 2, 5, 10, 30};
  double index_tol = 1e-3;
  double q0_tol = 1e-6;
  SolverKnobs solver{};
  SolverKnobs oracle_solver{1e-11, 200'000};
  IndexKnobs index{};
};

struct PropertyResult {
  explicit PropertyResult(std::string n = {}) : name(std::move(n)) {}

  std::string name;
  long checks = 0;
  long violations = 0;
  double worst = 0.0;  // largest violation magnitude (or deviation for equivalence checks)
  std::string first_violation;

  bool passed() const { return violations == 0; }

  void record(bool ok, double magnitude, const std::string& where) {
    ++checks;
    if (ok) return;
    ++violations;
    worst = std::max(worst, magnitude);
    if (first_violation.empty()) first_violation = where;
  }
};

struct VerifyReport {
  std::vector<PropertyResult> properties;
  std::vector<UserParams> sampled;

  bool passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed(); });
  }

  const PropertyResult& at(const std::string& name) const {
    for (const auto& p : properties)
      if (p.name == name) return p;
    throw ValidationError("no property named " + name);
  }
};

inline void write_report(std::ostream& os, const VerifyReport& r) {
  for (const auto& p : r.properties) {
    os << (p.passed() ? "PASS " : "FAIL ") << p.name << " checks=" << p.checks << " violations=" << p.violations
       << " worst=" << p.worst;
    if (!p.first_violation.empty()) os << " first=[" << p.first_violation << "]";
    os << '\n';
  }
}

/// Builds the solver model for a sampled parameter tuple. Replaceable so a
/// test can inject a corrupted kernel or cost table.
using ModelFactory = std::function<UserModel(const UserParams&)>;

inline std::vector<UserParams> sample_params(const VerifyGrid& g, int count, std::uint64_t salt) {
  std::mt19937_64 rng(g.seed ^ (salt * 0x9e3779b97f4a7c15ull));
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * (double(rng() >> 11) * 0x1.0p-53); };
  std::vector<UserParams> out;
  for (int i = 0; i < count; ++i) {
    UserParams p;
    p.arrival_prob = draw(g.a_lo, g.a_hi);
    p.channel_prob = draw(g.d_lo, g.d_hi);
    p.beam_cost = draw(g.p_lo, g.p_hi);
    p.holding_coeff = draw(g.q_lo, g.q_hi);
    p.buffer_size = g.buffer_size;
    out.push_back(p);
  }
  return out;
}

/// Tax grid spanning [-P, 2P + qN^2] evenly.
inline std::vector<double> lambda_grid(const UserParams& p, int points) {
  const double lo = -p.beam_cost;
  const double hi = 2.0 * p.beam_cost + p.holding_coeff * double(p.buffer_size) * double(p.buffer_size);
  std::vector<double> g;
  for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * double(i) / double(std::max(1, points - 1)));
  return g;
}

namespace detail {

inline std::string describe(const UserParams& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "a=%.4g d=%.4g P=%.4g q=%.4g N=%d", p.arrival_prob, p.channel_prob, p.beam_cost,
                p.holding_coeff, p.buffer_size);
  return buf;
}

inline std::string at(const UserParams& p, double tax, int x = -1) {
  std::string s = describe(p) + " tax=" + std::to_string(tax);
  if (x >= 0) s += " x=" + std::to_string(x);
  return s;
}

// g(x) = E[V((x-D)^+ + A)] - E[V(x + A)], truncated at N.
inline double g_function(const UserModel& m, std::span<const double> v, int x) {
  const auto& p = m.params();
  const double a = p.arrival_prob, d = p.channel_prob;
  const int n = m.max_state();
  auto ev = [&](int base) {
    return (1.0 - a) * v[std::clamp(base, 0, n)] + a * v[std::clamp(base + 1, 0, n)];
  };
  return d * ev(std::max(x - 1, 0)) + (1.0 - d) * ev(x) - ev(x);
}

}  // namespace detail

/// Value-function and policy-structure properties on the sampled grid.
inline void check_structure(const VerifyGrid& g, const ModelFactory& make, VerifyReport& rep) {
  PropertyResult mono{"value_monotone"}, convex{"value_convex"}, thresh{"threshold_policy"},
      tmono{"threshold_monotone_in_tax"}, gmono{"g_monotone"}, resid{"bellman_residual"},
      mass{"passive_mass_increasing"}, supermod{"threshold_cost_supermodular"};
  const auto params = sample_params(g, g.tuples, 1);
  rep.sampled = params;
  for (const auto& p : params) {
    const UserModel m = make(p);
    const int n = m.max_state();
    const int interior = n - g.boundary_margin;
    std::vector<double> warm;
    std::optional<int> prev_t;
    double prev_tax = 0.0;
    for (double tax : lambda_grid(p, g.lambda_points)) {
      const auto sol = relative_value_iteration(tax, m, g.solver, warm.empty() ? nullptr : &warm);
      warm = sol.values;
      double vmax = 1.0;
      for (double v : sol.values) vmax = std::max(vmax, std::abs(v));
      const double slack = g.slack * vmax;
      for (int x = 0; x < interior; ++x) {
        const double drop = sol.values[x] - sol.values[x + 1];
        mono.record(drop <= slack, drop, detail::at(p, tax, x));
      }
      for (int x = 0; x <= interior && x + 2 <= n; ++x) {
        const double dd = sol.values[x + 2] - 2.0 * sol.values[x + 1] + sol.values[x];
        convex.record(dd >= -slack, -dd, detail::at(p, tax, x));
      }
      for (int x = 0; x < interior; ++x) {
        const double rise = detail::g_function(m, sol.values, x + 1) - detail::g_function(m, sol.values, x);
        gmono.record(rise <= slack, rise, detail::at(p, tax, x));
      }
      resid.record(sol.residual <= g.solver.rvi_tol * sol.scale, sol.residual, detail::at(p, tax));
      const auto t = extract_threshold(sol.actions, static_cast<std::size_t>(interior + 1));
      thresh.record(t.has_value(), 1.0, detail::at(p, tax));
      if (t && prev_t) tmono.record(*t <= *prev_t, double(*t - *prev_t), detail::at(p, tax) + " previous tax " + std::to_string(prev_tax));
      if (t) {
        prev_t = t;
        prev_tax = tax;
      }
    }
    for (int t = 0; t < n - 1; ++t) {
      const auto inc = passive_mass_increment(t, m);
      mass.record(inc.sign > 0, inc.sign < 0 ? double(std::exp(inc.log_abs)) : 0.0,
                  detail::describe(p) + " t=" + std::to_string(t));
    }
    // Quadruples (l1 > l2, t1 > t2) drawn from the tax grid and a spread of thresholds.
    const auto taxes = lambda_grid(p, 4);
    const std::vector<int> ts{-1, 0, 1, 2, 5, n / 2, n - 2};
    std::vector<std::vector<double>> f(taxes.size(), std::vector<double>(ts.size()));
    for (std::size_t i = 0; i < taxes.size(); ++i)
      for (std::size_t j = 0; j < ts.size(); ++j) f[i][j] = threshold_average_cost(taxes[i], ts[j], m);
    for (std::size_t i1 = 0; i1 < taxes.size(); ++i1)
      for (std::size_t i2 = 0; i2 < i1; ++i2)
        for (std::size_t j1 = 0; j1 < ts.size(); ++j1)
          for (std::size_t j2 = 0; j2 < j1; ++j2) {
            const double lhs = f[i1][j2] + f[i2][j1];
            const double rhs = f[i1][j1] + f[i2][j2];
            const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
            supermod.record(lhs <= rhs + g.slack * scale, lhs - rhs,
                            detail::describe(p) + " t1=" + std::to_string(ts[j1]) + " t2=" + std::to_string(ts[j2]));
          }
  }
  for (auto* r : {&mono, &convex, &thresh, &tmono, &mass, &supermod, &gmono, &resid}) rep.properties.push_back(*r);
}

/// Discounted values approach the average cost: |(1-g)V^g(0) - eta| at
/// g = 0.999 within tolerance, and smaller than at g = 0.99.
inline void check_discount_limit(const VerifyGrid& g, const ModelFactory& make, VerifyReport& rep) {
  PropertyResult lim{"discount_limit"}, shrink{"discount_gap_shrinks"};
  const auto params = sample_params(g, g.discount_samples, 2);
  std::mt19937_64 rng(g.seed + 2);
  for (const auto& p : params) {
    const UserModel m = make(p);
    const auto grid = lambda_grid(p, g.lambda_points);
    const double tax = grid[rng() % grid.size()];
    const double eta = relative_value_iteration(tax, m, g.solver).avg_cost;
    const double gap999 = std::abs((1.0 - 0.999) * discounted_value_iteration(tax, 0.999, m, g.solver).v0 - eta);
    const double gap99 = std::abs((1.0 - 0.99) * discounted_value_iteration(tax, 0.99, m, g.solver).v0 - eta);
    lim.record(gap999 <= g.discount_tol, gap999, detail::at(p, tax));
    shrink.record(gap999 < gap99, gap999 - gap99, detail::at(p, tax));
  }
  rep.properties.push_back(lim);
  rep.properties.push_back(shrink);
}

/// The damped index iteration against bisection on the optimal action.
inline void check_index_equivalence(const VerifyGrid& g, const ModelFactory& make, VerifyReport& rep) {
  PropertyResult eq{"index_iteration_matches_bisection"}, zero{"index_zero_holding_cost"};
  const auto params = sample_params(g, g.index_sets, 3);
  for (const auto& p : params) {
    const UserModel m = make(p);
    for (int x : g.index_states) {
      if (x >= m.max_state()) continue;
      const auto br = index_bisection_bracket(x, m, g.oracle_solver, 1e-6);
      const double oracle = br.mid();
      double it = std::numeric_limits<double>::quiet_NaN();
      std::string note = br.complete ? "" : " (oracle bracket width " + std::to_string(br.width()) + ")";
      try {
        it = index_iteration(x, m, g.index, g.solver).index;
      } catch (const SolverError& e) {
        note += std::string(" (iteration: ") + to_string(e.kind()) + ")";
      }
      // An incomplete oracle bracket wider than the tolerance cannot certify agreement.
      const double dev = std::abs(it - oracle) + (br.complete ? 0.0 : 0.5 * br.width());
      eq.record(dev <= g.index_tol, std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev,
                detail::describe(p) + " x=" + std::to_string(x) + " iteration=" + std::to_string(it) +
                    " bisection=" + std::to_string(oracle) + note);
    }
    UserParams p0 = p;
    p0.holding_coeff = 0.0;
    const UserModel m0 = make(p0);
    for (int x : g.index_states) {
      if (x >= m0.max_state()) continue;
      double it = std::numeric_limits<double>::quiet_NaN();
      try {
        it = index_iteration(x, m0, g.index, g.solver).index;
      } catch (const SolverError&) {
      }
      const double dev = std::abs(it - p0.beam_cost);
      zero.record(dev <= g.q0_tol, std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev,
                  detail::describe(p0) + " x=" + std::to_string(x));
    }
  }
  rep.properties.push_back(eq);
  rep.properties.push_back(zero);
}

struct VerifySelection {
  bool structure = true;
  bool discount = true;
  bool index = true;
};

inline VerifyReport run_verify(const VerifyGrid& g, VerifySelection which = {},
                               const ModelFactory& make = [](const UserParams& p) { return UserModel(p); }) {
  g.solver.validate();
  g.index.validate();
  if (g.tuples < 1 || g.lambda_points < 2) throw ValidationError("verify grid needs tuples >= 1 and >= 2 taxes");
  if (g.boundary_margin < 0 || g.boundary_margin >= g.buffer_size) throw ValidationError("bad boundary margin");
  VerifyReport rep;
  if (which.structure) check_structure(g, make, rep);
  if (which.discount) check_discount_limit(g, make, rep);
  if (which.index) check_index_equivalence(g, make, rep);
  return rep;
}

}  // namespace beamsched
