#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beamsched/error.hpp"
#include "beamsched/mdp.hpp"
#include "beamsched/model.hpp"
#include "beamsched/whittle.hpp"

namespace beamsched {

/// One mBS with K users and B beams, plus run controls.
struct SystemConfig {
  int num_beams = 1;
  std::vector<UserParams> users;
  long horizon = 20'000;
  long warmup = 10'000;
  std::uint64_t seed = 1;
  PolicyKind policy = PolicyKind::Whittle;
  SolverKnobs solver{};
  IndexKnobs index{};
  // Defaults to q_i for every user when empty.
  std::vector<double> wfq_weights;

  int num_users() const noexcept { return static_cast<int>(users.size()); }

  std::vector<double> effective_wfq_weights() const {
    if (!wfq_weights.empty()) return wfq_weights;
    std::vector<double> w;
    w.reserve(users.size());
    for (const auto& u : users) w.push_back(u.holding_coeff);
    return w;
  }

  void validate() const {
    if (num_users() < 2) throw ValidationError("need K >= 2 users");
    if (num_beams < 1 || num_beams >= num_users())
      throw ValidationError("beam count violates 1 <= B < K (B=" + std::to_string(num_beams) +
                            ", K=" + std::to_string(num_users()) + ")");
    for (std::size_t i = 0; i < users.size(); ++i) {
      try {
        users[i].validate();
      } catch (const ValidationError& e) {
        throw ValidationError("user " + std::to_string(i) + ": " + e.what());
      }
    }
    if (horizon < 1) throw ValidationError("horizon must be positive");
    if (warmup < 0 || warmup >= horizon) throw ValidationError("warmup must satisfy 0 <= warmup < horizon");
    if (!wfq_weights.empty()) {
      if (wfq_weights.size() != users.size()) throw ValidationError("wfq_weights must have one entry per user");
      for (double w : wfq_weights)
        if (!(w > 0.0)) throw ValidationError("wfq_weights must be positive");
    } else if (policy == PolicyKind::WFQ) {
      for (const auto& u : users)
        if (!(u.holding_coeff > 0.0)) throw ValidationError("default WFQ weight q_i must be positive");
    }
    solver.validate();
    index.validate();
  }

  friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

}  // namespace beamsched
