#include "snap/validator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

namespace snap::validator {

using task::IURow;
using task::PartialState;
using task::SpecDocument;
using task::TaskState;

namespace {

// Sorted encoded full states covered by a partial state.
std::vector<std::size_t> state_set(const SpecDocument& spec, const PartialState& p) {
  std::vector<std::size_t> out;
  for (const auto& s : task::enumerate_states(spec, p)) out.push_back(task::encode(spec, s));
  std::sort(out.begin(), out.end());
  return out;
}

bool contains(const std::vector<std::size_t>& big, const std::vector<std::size_t>& small) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

bool intersects(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    if (a[i] < b[j]) ++i;
    else ++j;
  }
  return false;
}

std::string row_path(std::size_t pos) { return "iu_rows[" + std::to_string(pos) + "]"; }

std::vector<int> ordered_pair(int a, int b) { return a < b ? std::vector<int>{a, b} : std::vector<int>{b, a}; }

}  // namespace

Diagnostics check_integrity(const SpecDocument& spec) {
  Diagnostics out = task::structural_diagnostics(spec);
  if (has_errors(out)) return out;

  // Ability precondition cycles (self-reference is implicit and allowed).
  {
    std::size_t n = spec.abilities.size();
    std::vector<int> color(n, 0);
    std::vector<std::size_t> stack;
    std::set<std::set<std::size_t>> reported;
    std::function<void(std::size_t)> dfs = [&](std::size_t u) {
      color[u] = 1;
      stack.push_back(u);
      for (const auto& pre : spec.abilities[u].precondition_abilities) {
        std::size_t v = *spec.ability_index(pre);
        if (v == u) continue;
        if (color[v] == 1) {
          auto it = std::find(stack.begin(), stack.end(), v);
          std::set<std::size_t> members(it, stack.end());
          if (reported.insert(members).second) {
            std::string msg;
            for (auto k = it; k != stack.end(); ++k) msg += spec.abilities[*k].name + " -> ";
            msg += spec.abilities[v].name;
            out.push_back(error("ability_cycle", "abilities[" + std::to_string(v) + "].precondition_abilities",
                                "precondition abilities form a cycle: " + msg));
          }
        } else if (color[v] == 0) {
          dfs(v);
        }
      }
      stack.pop_back();
      color[u] = 2;
    };
    for (std::size_t i = 0; i < n; ++i)
      if (color[i] == 0) dfs(i);
  }

  for (std::size_t i = 0; i < spec.sensors.size(); ++i) {
    const auto& s = spec.sensors[i];
    auto targets = spec.sensor_target_values(s);
    for (std::size_t t = 0; t < s.noise.size(); ++t) {
      double sum = 0.0;
      for (double x : s.noise[t]) sum += x;
      if (std::abs(sum - 1.0) > 1e-9)
        out.push_back(error("row_not_normalized", "sensors[" + std::to_string(i) + "].noise." + targets[t],
                            "noise row sums to " + std::to_string(sum) + ", not 1"));
    }
  }

  if (spec.rewards.empty())
    out.push_back(error("no_goal", "rewards", "no reward entry, so no goal state can be reached"));

  for (std::size_t i = 0; i < spec.iu_rows.size(); ++i) {
    const auto& r = spec.iu_rows[i];
    const auto* b = spec.find_behaviour(r.behaviour);
    if (b && b->clauses.empty())
      out.push_back(error("behaviour_without_effects", row_path(i) + ".behaviour",
                          "behaviour '" + r.behaviour + "' has no effect clause", {r.index}));
  }

  std::vector<std::vector<std::size_t>> sets;
  for (const auto& r : spec.iu_rows) sets.push_back(state_set(spec, r.relevant_state));
  for (std::size_t i = 0; i < spec.iu_rows.size(); ++i)
    for (std::size_t j = i + 1; j < spec.iu_rows.size(); ++j) {
      const auto& a = spec.iu_rows[i];
      const auto& b = spec.iu_rows[j];
      if (a.behaviour != b.behaviour) continue;
      if (contains(sets[i], sets[j]) || contains(sets[j], sets[i])) continue;
      if (intersects(sets[i], sets[j]))
        out.push_back(error("same_behaviour_overlap", row_path(j) + ".relevant_state",
                            "rows " + std::to_string(a.index) + " and " + std::to_string(b.index) +
                                " of behaviour '" + a.behaviour + "' partly overlap; split them into disjoint rows",
                            ordered_pair(a.index, b.index)));
    }
  return out;
}

Diagnostics detect_subsumption(const SpecDocument& spec) {
  Diagnostics out;
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& r : spec.iu_rows) sets.push_back(state_set(spec, r.relevant_state));
  for (std::size_t i = 0; i < spec.iu_rows.size(); ++i)
    for (std::size_t j = i + 1; j < spec.iu_rows.size(); ++j) {
      const auto& a = spec.iu_rows[i];
      const auto& b = spec.iu_rows[j];
      if (a.behaviour != b.behaviour) continue;
      bool ab = contains(sets[i], sets[j]);
      bool ba = contains(sets[j], sets[i]);
      if (!ab && !ba) continue;
      std::string msg;
      if (ab && ba) {
        msg = "rows " + std::to_string(a.index) + " and " + std::to_string(b.index) + " of behaviour '" +
              a.behaviour + "' cover the same states";
      } else {
        const IURow& big = ab ? a : b;
        const IURow& small = ab ? b : a;
        msg = "IU row " + std::to_string(big.index) + " subsumes IU row " + std::to_string(small.index) +
              " (behaviour '" + a.behaviour + "'); make the relevant states disjoint";
      }
      out.push_back(error("subsumption", row_path(j) + ".relevant_state", msg, ordered_pair(a.index, b.index)));
    }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<PartialState> factor_states(const SpecDocument& spec, const std::vector<TaskState>& states) {
  const std::size_t nv = spec.variables.size();
  struct Piece {
    std::size_t first;
    PartialState p;
  };
  std::vector<Piece> pieces;

  std::function<void(const std::vector<TaskState>&, std::vector<bool>)> rec =
      [&](const std::vector<TaskState>& set, std::vector<bool> active) {
        if (set.empty()) return;
        std::vector<std::set<std::uint32_t>> proj(nv);
        for (const auto& s : set)
          for (std::size_t i = 0; i < nv; ++i) proj[i].insert(s[i]);
        std::size_t product = 1;
        for (std::size_t i = 0; i < nv; ++i) product *= proj[i].size();
        if (product == set.size()) {
          Piece pc{SIZE_MAX, {}};
          for (const auto& s : set) pc.first = std::min(pc.first, task::encode(spec, s));
          for (std::size_t i = 0; i < nv; ++i) {
            if (proj[i].size() == spec.variables[i].values.size()) continue;
            auto& vals = pc.p[spec.variables[i].name];
            for (auto k : proj[i]) vals.push_back(spec.variables[i].values[k]);
          }
          pieces.push_back(std::move(pc));
          return;
        }
        // Group the values of each active variable by the residual state set
        // they carry; split on the variable with the fewest groups.
        std::size_t best = nv, best_groups = SIZE_MAX;
        std::vector<std::vector<std::uint32_t>> best_partition;
        for (std::size_t i = 0; i < nv; ++i) {
          if (!active[i] || proj[i].size() < 2) continue;
          std::map<std::uint32_t, std::set<TaskState>> residual;
          for (const auto& s : set) {
            TaskState r = s;
            r[i] = 0;
            residual[s[i]].insert(r);
          }
          std::map<std::set<TaskState>, std::vector<std::uint32_t>> groups;
          for (auto& [val, res] : residual) groups[res].push_back(val);
          if (groups.size() == 1) {
            // Already a product in this variable; nothing to gain by splitting.
            active[i] = false;
            continue;
          }
          if (groups.size() < best_groups) {
            best = i;
            best_groups = groups.size();
            best_partition.clear();
            for (auto& [res, vals] : groups) best_partition.push_back(vals);
          }
        }
        if (best == nv) {
          // Every remaining variable factors, so the set is a product; the
          // check above makes this unreachable.
          return;
        }
        std::sort(best_partition.begin(), best_partition.end());
        for (const auto& vals : best_partition) {
          std::vector<TaskState> sub;
          for (const auto& s : set)
            if (std::find(vals.begin(), vals.end(), s[best]) != vals.end()) sub.push_back(s);
          auto act = active;
          act[best] = false;
          rec(sub, act);
        }
      };
  rec(states, std::vector<bool>(nv, true));
  std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.first < b.first; });
  std::vector<PartialState> out;
  for (auto& pc : pieces) out.push_back(std::move(pc.p));
  return out;
}

namespace {

std::vector<std::vector<int>> groups_of(const SpecDocument& spec, const std::vector<IURow>& rows) {
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> by_set;
  std::vector<std::vector<std::size_t>> order;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto set = state_set(spec, rows[i].relevant_state);
    auto [it, fresh] = by_set.try_emplace(set);
    if (fresh) order.push_back(set);
    it->second.push_back(i);
  }
  std::vector<std::vector<int>> out;
  for (const auto& key : order) {
    const auto& members = by_set[key];
    std::set<std::string> behs;
    for (auto m : members) behs.insert(rows[m].behaviour);
    if (behs.size() < 2) continue;
    std::vector<int> g;
    for (auto m : members) g.push_back(rows[m].index);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::vector<std::vector<int>> shared_groups(const SpecDocument& spec) { return groups_of(spec, spec.iu_rows); }

ExpansionResult expand_overlaps(const SpecDocument& spec) {
  ExpansionResult res;
  const std::size_t n = task::task_state_count(spec);
  const std::size_t nr = spec.iu_rows.size();

  std::vector<std::vector<bool>> member(nr, std::vector<bool>(n, false));
  for (std::size_t r = 0; r < nr; ++r)
    for (auto s : state_set(spec, spec.iu_rows[r].relevant_state)) member[r][s] = true;

  // signature[s]: rows relevant at s
  std::vector<std::vector<std::size_t>> signature(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < nr; ++r)
      if (member[r][s]) signature[s].push_back(r);

  for (std::size_t r = 0; r < nr; ++r) {
    const IURow& row = spec.iu_rows[r];
    std::map<std::vector<std::size_t>, std::vector<TaskState>> fragments;
    for (std::size_t s = 0; s < n; ++s)
      if (member[r][s]) fragments[signature[s]].push_back(task::decode(spec, s));
    if (fragments.size() <= 1) {
      res.expanded_rows.push_back(row);
      continue;
    }
    res.changed = true;
    struct Out {
      std::size_t first;
      IURow row;
    };
    std::vector<Out> outs;
    for (const auto& [sig, states] : fragments) {
      bool shared = false;
      for (auto q : sig)
        if (spec.iu_rows[q].behaviour != row.behaviour) shared = true;
      for (auto& p : factor_states(spec, states)) {
        IURow frag = row;
        frag.relevant_state = std::move(p);
        if (!shared && !frag.probability) frag.probability = 1.0;
        std::size_t first = state_set(spec, frag.relevant_state).front();
        outs.push_back({first, std::move(frag)});
      }
    }
    std::sort(outs.begin(), outs.end(), [](const Out& a, const Out& b) { return a.first < b.first; });
    for (auto& o : outs) res.expanded_rows.push_back(std::move(o.row));
  }
  for (std::size_t i = 0; i < res.expanded_rows.size(); ++i) res.expanded_rows[i].index = static_cast<int>(i + 1);
  res.needs_probability = groups_of(spec, res.expanded_rows);
  return res;
}

Diagnostics check_beh_prob(const SpecDocument& spec) {
  Diagnostics out;
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < spec.iu_rows.size(); ++i) pos[spec.iu_rows[i].index] = i;

  // Rows of different behaviours that overlap without covering the same
  // states have not been through expansion.
  std::vector<std::vector<std::size_t>> sets;
  for (const auto& r : spec.iu_rows) sets.push_back(state_set(spec, r.relevant_state));
  for (std::size_t i = 0; i < spec.iu_rows.size(); ++i)
    for (std::size_t j = i + 1; j < spec.iu_rows.size(); ++j) {
      const auto& a = spec.iu_rows[i];
      const auto& b = spec.iu_rows[j];
      if (a.behaviour == b.behaviour || sets[i] == sets[j]) continue;
      if (intersects(sets[i], sets[j]))
        out.push_back(error("overlap_not_expanded", row_path(j) + ".relevant_state",
                            "rows " + std::to_string(a.index) + " and " + std::to_string(b.index) +
                                " share some but not all states; run the overlap expansion",
                            ordered_pair(a.index, b.index)));
    }

  for (const auto& g : shared_groups(spec)) {
    double sum = 0.0;
    bool missing = false;
    for (int idx : g) {
      const auto& r = spec.iu_rows[pos[idx]];
      if (!r.probability) {
        missing = true;
        out.push_back(error("probability_missing", row_path(pos[idx]) + ".probability",
                            "row " + std::to_string(idx) + " shares its relevant state with other behaviours and needs a probability",
                            g));
      } else {
        sum += *r.probability;
      }
    }
    if (!missing && std::abs(sum - 1.0) > 1e-9)
      out.push_back(error("group_not_normalized", row_path(pos[g.front()]) + ".probability",
                          "probabilities of rows sharing this relevant state sum to " + std::to_string(sum) + ", not 1",
                          g));
  }

  for (std::size_t b = 0; b < spec.behaviours.size(); ++b) {
    double sum = 0.0;
    std::vector<int> rows;
    for (const auto& r : spec.iu_rows)
      if (r.behaviour == spec.behaviours[b].name) {
        sum += r.probability.value_or(1.0);
        rows.push_back(r.index);
      }
    if (rows.empty()) continue;
    if (std::abs(sum - 1.0) > 1e-9)
      out.push_back(warning("paper_eq3_violated", "behaviours[" + std::to_string(b) + "]",
                            "row probabilities of behaviour '" + spec.behaviours[b].name + "' sum to " +
                                std::to_string(sum) + " rather than 1 (per-behaviour normalization)",
                            rows));
  }
  return out;
}

SpecDocument with_rows(SpecDocument spec, std::vector<IURow> rows) {
  spec.iu_rows = std::move(rows);
  return spec;
}

Report validate(const SpecDocument& spec) {
  Report rep;
  rep.diagnostics = check_integrity(spec);
  if (has_errors(rep.diagnostics)) {
    rep.expanded = spec;
    return rep;
  }
  auto sub = detect_subsumption(spec);
  rep.diagnostics.insert(rep.diagnostics.end(), sub.begin(), sub.end());
  if (!sub.empty()) {
    rep.expanded = spec;
    return rep;
  }
  rep.expansion = expand_overlaps(spec);
  rep.expanded = with_rows(spec, rep.expansion.expanded_rows);
  auto bp = check_beh_prob(rep.expanded);
  rep.diagnostics.insert(rep.diagnostics.end(), bp.begin(), bp.end());
  return rep;
}

}  // namespace snap::validator
