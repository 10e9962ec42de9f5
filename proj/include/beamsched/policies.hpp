#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/model.hpp"
#include "beamsched/whittle.hpp"

namespace beamsched {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits; platform independent,
/// unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Users granted a beam in one slot; sorted by user id. Only non-empty
/// queues are ever chosen, so unused beams are switched off.
struct Selection {
  std::vector<int> chosen;
  int active_count() const { return static_cast<int>(chosen.size()); }
};

namespace detail {

inline std::vector<int> nonempty_users(std::span<const int> queues) {
  std::vector<int> out;
  for (std::size_t i = 0; i < queues.size(); ++i)
    if (queues[i] > 0) out.push_back(static_cast<int>(i));
  return out;
}

// B best users by ascending key among non-empty queues; ties uniformly at
// random. One tie-break draw per candidate keeps stream use fixed per slot.
template <class Key>
Selection rank_select(std::span<const int> queues, int beams, Rng& rng, Key&& key) {
  if (beams < 0) throw ValidationError("beam count must be non-negative");
  struct Cand {
    double key;
    std::uint64_t tie;
    int user;
  };
  std::vector<Cand> c;
  for (int u : nonempty_users(queues)) c.push_back({key(u), rng(), u});
  const std::size_t take = std::min<std::size_t>(beams, c.size());
  std::partial_sort(c.begin(), c.begin() + take, c.end(), [](const Cand& a, const Cand& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.tie < b.tie;
  });
  Selection s;
  for (std::size_t i = 0; i < take; ++i) s.chosen.push_back(c[i].user);
  std::sort(s.chosen.begin(), s.chosen.end());
  return s;
}

}  // namespace detail

/// B smallest Whittle indices among users with packets queued.
inline Selection whittle_select(std::span<const int> queues, std::span<const WhittleTable> tables, int beams,
                                Rng& rng) {
  if (tables.size() != queues.size()) throw ValidationError("whittle_select: one table per user required");
  return detail::rank_select(queues, beams, rng, [&](int u) { return lookup_index(tables[u], queues[u]); });
}

/// Longest queues first.
inline Selection lqf_select(std::span<const int> queues, int beams, Rng& rng) {
  return detail::rank_select(queues, beams, rng, [&](int u) { return -static_cast<double>(queues[u]); });
}

/// Largest queue length times good-channel probability.
inline Selection mws_select(std::span<const int> queues, std::span<const double> channel_probs, int beams, Rng& rng) {
  if (channel_probs.size() != queues.size()) throw ValidationError("mws_select: length mismatch");
  return detail::rank_select(queues, beams, rng,
                             [&](int u) { return -static_cast<double>(queues[u]) * channel_probs[u]; });
}

/// Weighted fair queueing: users drawn with probability proportional to
/// their weight until min(B, #non-empty) distinct non-empty users are held.
/// Draws that would hit an empty or already chosen queue are discarded; this
/// is sampled directly as successive draws renormalised over the remaining
/// eligible users, which has the same law and a bounded number of draws.
inline Selection wfq_select(std::span<const int> queues, std::span<const double> weights, int beams, Rng& rng) {
  if (weights.size() != queues.size()) throw ValidationError("wfq_select: length mismatch");
  for (double w : weights)
    if (!(w > 0.0)) throw ValidationError("wfq weights must be positive");
  std::vector<int> eligible = detail::nonempty_users(queues);
  const std::size_t take = std::min<std::size_t>(beams, eligible.size());
  Selection s;
  while (s.chosen.size() < take) {
    double total = 0.0;
    for (int u : eligible) total += weights[u];
    double r = uniform01(rng) * total;
    std::size_t pick = eligible.size() - 1;
    for (std::size_t i = 0; i < eligible.size(); ++i) {
      r -= weights[eligible[i]];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    s.chosen.push_back(eligible[pick]);
    eligible.erase(eligible.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(s.chosen.begin(), s.chosen.end());
  return s;
}

/// Uniform sample of min(B, #non-empty) distinct non-empty users.
inline Selection random_select(std::span<const int> queues, int beams, Rng& rng) {
  std::vector<int> pool = detail::nonempty_users(queues);
  const std::size_t take = std::min<std::size_t>(beams, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform01(rng) * double(pool.size() - i));
    std::swap(pool[i], pool[std::min(j, pool.size() - 1)]);
  }
  Selection s;
  s.chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(s.chosen.begin(), s.chosen.end());
  return s;
}

}  // namespace beamsched
