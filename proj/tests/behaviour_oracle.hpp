#pragma once

#include <vector>

#include "snap/task_model.hpp"

namespace snap::testing {

// Scalar reading of the behaviour model for one context.
inline std::vector<double> behaviour_oracle(const task::SpecDocument& s, const task::TaskState& t, std::size_t prev,
                                            const std::vector<bool>& abil, double rho, double kappa) {
  const std::size_t nb = s.behaviours.size();
  auto in = [&](const task::PartialState& p) { return task::matches(s, p, t); };
  bool goal = false;
  for (const auto& e : s.rewards)
    if (e.is_goal && in(e.state_set)) goal = true;

  std::vector<double> w(nb + 2, 0.0);
  bool any_rel = false, rel_unable = false;
  for (const auto& r : s.iu_rows) {
    if (!in(r.relevant_state)) continue;
    any_rel = true;
    bool able = true;
    for (const auto& a : r.required_abilities) able = able && abil[*s.ability_index(a)];
    if (!able) rel_unable = true;
    if (able && !goal) w[*s.behaviour_index(r.behaviour)] += r.probability.value_or(1.0);
  }
  w[nb] = (rel_unable || !any_rel || goal) ? 1.0 : 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    bool possible = false;
    for (const auto& c : s.behaviours[b].clauses) possible = possible || in(c.preconditions);
    if (possible) w[b] += rho;
  }
  w[nb] += rho;
  w[nb + 1] += rho;
  w[prev] += kappa;
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace snap::testing
