#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "beamsched/model.hpp"

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// Full (N+1)x(N+1) transition matrix of a stationary policy, built from
// step_queue by enumerating channel and arrival outcomes.
inline Matrix transition_matrix(const beamsched::UserParams& p, const std::vector<int>& action) {
  const int n = p.buffer_size;
  Matrix m(n + 1, std::vector<double>(n + 1, 0.0));
  for (int x = 0; x <= n; ++x)
    for (int s = 0; s <= 1; ++s)
      for (int a = 0; a <= 1; ++a) {
        const double pr = (s ? p.channel_prob : 1 - p.channel_prob) * (a ? p.arrival_prob : 1 - p.arrival_prob);
        m[x][beamsched::step_queue(x, action[x], s, a, n)] += pr;
      }
  return m;
}

// Gaussian elimination with partial pivoting.
inline std::vector<double> solve_dense(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-300) throw std::runtime_error("singular");
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

struct Evaluation {
  std::vector<double> values;
  double eta;
};

// Unknowns V(1..N) and eta with V(0) = 0:  V(y) + eta - sum_z P(y,z) V(z) = c(y).
inline Evaluation evaluate_dense(const beamsched::UserParams& p, const std::vector<int>& action, double tax) {
  const int n = p.buffer_size;
  const auto pm = transition_matrix(p, action);
  Matrix a(n + 1, std::vector<double>(n + 1, 0.0));
  std::vector<double> b(n + 1);
  for (int y = 0; y <= n; ++y) {
    b[y] = p.holding_coeff * y * y + (action[y] ? p.beam_cost : tax);
    for (int z = 1; z <= n; ++z) a[y][z - 1] = (y == z ? 1.0 : 0.0) - pm[y][z];
    a[y][n] = 1.0;
  }
  const auto sol = solve_dense(a, b);
  Evaluation e;
  e.values.assign(n + 1, 0.0);
  for (int z = 1; z <= n; ++z) e.values[z] = sol[z - 1];
  e.eta = sol[n];
  return e;
}

// Power iteration pi <- pi P from the uniform law.
inline std::vector<double> power_stationary(const Matrix& pm, int iters, double tol) {
  const std::size_t n = pm.size();
  std::vector<double> pi(n, 1.0 / double(n)), next(n);
  for (int it = 0; it < iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * pm[i][j];
    double diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(next[i] - pi[i]));
    pi.swap(next);
    if (diff < tol) break;
  }
  return pi;
}

// Relative value iteration restricted to a fixed policy.
inline Evaluation fixed_policy_vi(const beamsched::UserParams& p, const std::vector<int>& action, double tax,
                                  int iters) {
  const auto pm = transition_matrix(p, action);
  const std::size_t n = pm.size();
  std::vector<double> v(n, 0.0), tv(n);
  double eta = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t y = 0; y < n; ++y) {
      double s = p.holding_coeff * double(y) * double(y) + (action[y] ? p.beam_cost : tax);
      for (std::size_t z = 0; z < n; ++z) s += pm[y][z] * v[z];
      tv[y] = s;
    }
    eta = tv[0] - v[0];
    for (std::size_t y = 0; y < n; ++y) v[y] = tv[y] - tv[0];
  }
  return {v, eta};
}

}  // namespace oracle
