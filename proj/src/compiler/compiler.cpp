#include "snap/compiler.hpp"

#include <algorithm>
#include <cmath>

#include "snap/validator.hpp"

namespace snap::compiler {

using add::Add;
using add::Manager;
using add::VarId;
using task::PartialState;
using task::SpecDocument;

namespace {

std::string summarize(const Diagnostics& ds) {
  for (const auto& d : ds)
    if (d.severity == Severity::error) return "compilation failed: " + format(d);
  return "compilation failed";
}

constexpr std::uint32_t kYes = 1;

}  // namespace

CompileError::CompileError(Diagnostics ds) : std::runtime_error(summarize(ds)), ds_(std::move(ds)) {}

std::size_t CompiledPOMDP::flat_state_count() const {
  std::size_t n = 1;
  for (const auto& v : task_vars) n *= mgr->arity(v.cur);
  n *= mgr->arity(behaviour_var.cur);
  for (const auto& v : ability_vars) n *= mgr->arity(v.cur);
  return n;
}

std::size_t CompiledPOMDP::observation_count() const {
  std::size_t n = 1;
  for (auto v : sensor_vars) n *= mgr->arity(v);
  return n;
}

std::vector<const Cpt*> CompiledPOMDP::all_cpts() const {
  std::vector<const Cpt*> out;
  for (const auto& c : ability_cpts) out.push_back(&c);
  out.push_back(&behaviour_cpt);
  for (const auto& c : task_cpts) out.push_back(&c);
  for (const auto& c : sensor_cpts) out.push_back(&c);
  return out;
}

std::size_t CompiledPOMDP::action_index(std::string_view name) const {
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i].name == name) return i;
  throw std::out_of_range("unknown action '" + std::string(name) + "'");
}

Layout declare_variables(Manager& mgr, const SpecDocument& spec) {
  Layout l;
  std::vector<std::string> names;
  for (const auto& a : derive_actions(spec)) names.push_back(a.name);
  l.action_var = mgr.declare(std::string(task::kActionVar), names);
  for (const auto& v : spec.variables) {
    auto [c, p] = mgr.declare_pair(v.name, v.values);
    l.task_vars.push_back({c, p});
  }
  {
    auto [c, p] = mgr.declare_pair(std::string(task::kBehaviourVar), spec.behaviour_values());
    l.behaviour_var = {c, p};
  }
  for (const auto& a : spec.abilities) {
    auto [c, p] = mgr.declare_pair(a.name, {"no", "yes"});
    l.ability_vars.push_back({c, p});
  }
  for (const auto& s : spec.sensors) l.sensor_vars.push_back(mgr.declare(add::primed_name(s.name), s.readings, add::Slice::primed));
  return l;
}

std::vector<Action> derive_actions(const SpecDocument& spec) {
  std::vector<Action> out;
  out.push_back({std::string(task::kDoNothing), std::nullopt, 0.0});
  for (std::size_t i = 0; i < spec.abilities.size(); ++i)
    out.push_back({std::string(task::kPromptPrefix) + spec.abilities[i].name, i, spec.abilities[i].prompt_cost});
  return out;
}

Add partial_indicator(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec,
                      const PartialState& p) {
  Add acc = Add::constant(mgr, 1.0);
  for (const auto& [var, vals] : p) {
    std::size_t i = *spec.variable_index(var);
    Add any = Add::constant(mgr, 0.0);
    for (const auto& v : vals) any = any + Add::indicator(mgr, layout.task_vars[i].cur, spec.value_index(i, v));
    acc = acc * any;
  }
  return acc;
}

Add compile_ability_cpt(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec,
                        std::size_t ability, const std::vector<Action>& actions) {
  const auto& a = spec.abilities[ability];
  std::vector<std::size_t> pre{ability};
  for (const auto& name : a.precondition_abilities) {
    std::size_t k = *spec.ability_index(name);
    if (std::find(pre.begin(), pre.end(), k) == pre.end()) pre.push_back(k);
  }
  std::vector<VarId> vars{layout.action_var, layout.ability_vars[ability].primed};
  for (auto k : pre) vars.push_back(layout.ability_vars[k].cur);
  const VarId child = layout.ability_vars[ability].primed;
  return add::tabulate(mgr, vars, [&](const add::Assignment& x) {
    bool g1 = actions[x[layout.action_var]].ability == ability;
    bool g2 = std::all_of(pre.begin(), pre.end(), [&](std::size_t k) { return x[layout.ability_vars[k].cur] == kYes; });
    const auto& d = a.dyn_prob;
    double p = g1 ? (g2 ? d.keep_prompt : d.gain_prompt) : (g2 ? d.keep : d.gain);
    return x[child] == kYes ? p : 1.0 - p;
  });
}

Add goal_indicator(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec) {
  std::vector<const task::RewardEntry*> goals;
  for (const auto& e : spec.rewards)
    if (e.is_goal) goals.push_back(&e);
  if (goals.empty() && !spec.rewards.empty()) {
    double best = -INFINITY;
    for (const auto& e : spec.rewards) best = std::max(best, e.value);
    for (const auto& e : spec.rewards)
      if (e.value == best) goals.push_back(&e);
  }
  Add g = Add::constant(mgr, 0.0);
  for (const auto* e : goals) g = add::apply(add::Op::max, g, partial_indicator(mgr, layout, spec, e->state_set));
  return g;
}

Add compile_behaviour_cpt(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec,
                          const task::ModelConfig& config) {
  const Add zero = Add::constant(mgr, 0.0);
  const Add one = Add::constant(mgr, 1.0);
  const Add goal = goal_indicator(mgr, layout, spec);
  const Add not_goal = one - goal;
  const std::size_t nb = spec.behaviours.size();

  // Declared weights: sum over rows of relevance x ability availability x
  // row probability.
  std::vector<Add> weight(nb, zero);
  Add any_relevant = zero;
  Add relevant_unable = zero;
  for (const auto& row : spec.iu_rows) {
    std::size_t b = *spec.behaviour_index(row.behaviour);
    Add rel = partial_indicator(mgr, layout, spec, row.relevant_state);
    Add abil = one;
    for (const auto& name : row.required_abilities)
      abil = abil * Add::indicator(mgr, layout.ability_vars[*spec.ability_index(name)].primed, kYes);
    weight[b] = weight[b] + rel * abil * Add::constant(mgr, row.probability.value_or(1.0));
    any_relevant = add::apply(add::Op::max, any_relevant, rel);
    relevant_unable = add::apply(add::Op::max, relevant_unable, rel * (one - abil));
  }
  // Once the goal holds the client is expected to stop.
  for (auto& w : weight) w = w * not_goal;
  Add nothing = add::apply(add::Op::max, add::apply(add::Op::max, relevant_unable, one - any_relevant), goal);

  const Add rho = Add::constant(mgr, config.rho);
  const Add kappa = Add::constant(mgr, config.kappa);
  const VarId bc = layout.behaviour_var.cur;
  const VarId bp = layout.behaviour_var.primed;
  Add total = zero;
  for (std::size_t v = 0; v < nb + 2; ++v) {
    Add base;
    Add possible;
    if (v < nb) {
      base = weight[v];
      possible = zero;
      for (const auto& c : spec.behaviours[v].clauses)
        possible = add::apply(add::Op::max, possible, partial_indicator(mgr, layout, spec, c.preconditions));
    } else {
      base = v == nb ? nothing : zero;
      possible = one;
    }
    Add w = base + rho * possible + kappa * Add::indicator(mgr, bc, v);
    total = total + Add::indicator(mgr, bp, v) * w;
  }
  try {
    return add::normalize_over(total, bp);
  } catch (const add::ZeroMassError& e) {
    throw CompileError({error("zero_mass", "behaviours",
                              "behaviour weights vanish in context {" + e.context() + "}; raise rho or kappa")});
  }
}

namespace {

bool partials_overlap(const PartialState& a, const PartialState& b) {
  for (const auto& [var, va] : a) {
    auto it = b.find(var);
    if (it == b.end()) continue;
    bool common = std::any_of(va.begin(), va.end(), [&](const std::string& x) {
      return std::find(it->second.begin(), it->second.end(), x) != it->second.end();
    });
    if (!common) return false;
  }
  return true;
}

bool holds(const SpecDocument& spec, const Layout& layout, const PartialState& p, const add::Assignment& x) {
  for (const auto& [var, vals] : p) {
    std::size_t i = *spec.variable_index(var);
    const auto& cur = spec.variables[i].values[x[layout.task_vars[i].cur]];
    if (std::find(vals.begin(), vals.end(), cur) == vals.end()) return false;
  }
  return true;
}

}  // namespace

Add compile_task_cpt(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec,
                     std::size_t variable, const task::ModelConfig& config) {
  const auto& tv = spec.variables[variable];
  const std::size_t nb = spec.behaviours.size();

  // Clauses per behaviour that set this variable.
  std::vector<std::vector<const task::Clause*>> setting(nb);
  std::vector<VarId> vars{layout.task_vars[variable].cur, layout.task_vars[variable].primed, layout.behaviour_var.primed};
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& clauses = spec.behaviours[b].clauses;
    for (std::size_t c = 0; c < clauses.size(); ++c) {
      auto it = clauses[c].effects.find(tv.name);
      if (it == clauses[c].effects.end()) continue;
      for (std::size_t d = 0; d < c; ++d) {
        auto jt = clauses[d].effects.find(tv.name);
        if (jt == clauses[d].effects.end() || jt->second == it->second) continue;
        if (partials_overlap(clauses[c].preconditions, clauses[d].preconditions))
          throw CompileError({error("conflicting_effects",
                                    "behaviours[" + std::to_string(b) + "].clauses[" + std::to_string(c) + "]",
                                    "clauses " + std::to_string(d) + " and " + std::to_string(c) + " of '" +
                                        spec.behaviours[b].name + "' can both apply and set '" + tv.name +
                                        "' to different values")});
      }
      setting[b].push_back(&clauses[c]);
      for (const auto& [pv, _] : clauses[c].preconditions)
        vars.push_back(layout.task_vars[*spec.variable_index(pv)].cur);
    }
  }

  const VarId cur = layout.task_vars[variable].cur;
  const VarId nxt = layout.task_vars[variable].primed;
  const VarId bp = layout.behaviour_var.primed;
  const std::size_t n = tv.values.size();
  return add::tabulate(mgr, vars, [&](const add::Assignment& x) {
    std::size_t b = x[bp];
    std::size_t now = x[cur];
    std::size_t next = x[nxt];
    if (b == nb + 1) {  // other
      if (next == now) return 1.0 - config.other_noise;
      return config.other_noise / static_cast<double>(n - 1);
    }
    std::size_t target = now;
    if (b < nb)
      for (const auto* c : setting[b])
        if (holds(spec, layout, c->preconditions, x)) {
          target = spec.value_index(variable, c->effects.at(tv.name).front());
          break;
        }
    return next == target ? 1.0 : 0.0;
  });
}

Add compile_sensor_cpt(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec,
                       std::size_t sensor) {
  const auto& s = spec.sensors[sensor];
  const VarId sv = layout.sensor_vars[sensor];
  VarId target;
  std::function<std::size_t(std::uint32_t)> row;
  if (auto i = spec.variable_index(s.target)) {
    target = layout.task_vars[*i].primed;
    row = [](std::uint32_t v) { return v; };
  } else if (s.target == task::kBehaviourVar) {
    target = layout.behaviour_var.primed;
    row = [](std::uint32_t v) { return v; };
  } else {
    target = layout.behaviour_var.primed;
    auto values = spec.behaviour_values();
    std::uint32_t which = static_cast<std::uint32_t>(std::find(values.begin(), values.end(), s.target) - values.begin());
    row = [which](std::uint32_t v) -> std::size_t { return v == which ? 1 : 0; };
  }
  std::vector<VarId> vars{target, sv};
  return add::tabulate(mgr, vars, [&](const add::Assignment& x) { return s.noise[row(x[target])][x[sv]]; });
}

Add compile_reward(const std::shared_ptr<Manager>& mgr, const Layout& layout, const SpecDocument& spec) {
  Add r = Add::constant(mgr, 0.0);
  for (const auto& e : spec.rewards)
    r = r + partial_indicator(mgr, layout, spec, e.state_set) * Add::constant(mgr, e.value);
  return r;
}

double normalization_error(const Cpt& cpt) {
  Add total = add::sum_out(cpt.dd, cpt.child);
  Add dev = add::map_leaves(total, [](double x) { return std::abs(x - 1.0); });
  return dev.max_leaf();
}

CompiledPOMDP compile(const SpecDocument& input, std::optional<task::ModelConfig> config) {
  auto rep = validator::validate(input);
  if (has_errors(rep.diagnostics)) throw CompileError(rep.diagnostics);
  const SpecDocument& spec = rep.expanded;

  CompiledPOMDP m;
  m.spec = spec;
  m.config = config.value_or(spec.config);
  m.mgr = std::make_shared<Manager>();
  Layout l = declare_variables(*m.mgr, spec);
  m.action_var = l.action_var;
  m.task_vars = l.task_vars;
  m.behaviour_var = l.behaviour_var;
  m.ability_vars = l.ability_vars;
  m.sensor_vars = l.sensor_vars;
  m.actions = derive_actions(spec);

  for (std::size_t i = 0; i < spec.abilities.size(); ++i)
    m.ability_cpts.push_back({add::primed_name(spec.abilities[i].name), l.ability_vars[i].primed,
                              compile_ability_cpt(m.mgr, l, spec, i, m.actions)});
  m.behaviour_cpt = {add::primed_name(task::kBehaviourVar), l.behaviour_var.primed,
                     compile_behaviour_cpt(m.mgr, l, spec, m.config)};
  for (std::size_t i = 0; i < spec.variables.size(); ++i)
    m.task_cpts.push_back({add::primed_name(spec.variables[i].name), l.task_vars[i].primed,
                           compile_task_cpt(m.mgr, l, spec, i, m.config)});
  for (std::size_t i = 0; i < spec.sensors.size(); ++i)
    m.sensor_cpts.push_back({add::primed_name(spec.sensors[i].name), l.sensor_vars[i], compile_sensor_cpt(m.mgr, l, spec, i)});
  m.reward = compile_reward(m.mgr, l, spec);
  m.goal = goal_indicator(m.mgr, l, spec);

  Add init = Add::constant(m.mgr, 1.0);
  auto s0 = task::initial_state(spec);
  for (std::size_t i = 0; i < spec.variables.size(); ++i) init = init * Add::indicator(m.mgr, l.task_vars[i].cur, s0[i]);
  init = init * Add::indicator(m.mgr, l.behaviour_var.cur, spec.behaviours.size());
  for (std::size_t i = 0; i < spec.abilities.size(); ++i) {
    double p = spec.abilities[i].prior;
    std::vector<VarId> v{l.ability_vars[i].cur};
    init = init * add::tabulate(m.mgr, v, [&](const add::Assignment& x) { return x[v[0]] == kYes ? p : 1.0 - p; });
  }
  m.initial_belief = init;

  Diagnostics bad;
  for (const Cpt* c : m.all_cpts()) {
    double e = normalization_error(*c);
    if (e > 1e-9)
      bad.push_back(error("cpt_not_normalized", c->name, "CPT deviates from 1 by " + std::to_string(e)));
  }
  if (!bad.empty()) throw CompileError(bad);
  return m;
}

}  // namespace snap::compiler
