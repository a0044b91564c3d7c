#include "snap/simulator.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

#include "snap/kernels.hpp"

namespace snap::sim {

using solver::FactoredFlatModel;

Engine make_engine(compiler::CompiledPOMDP model, const solver::FlattenOptions& options) {
  Engine e;
  auto m = std::make_shared<compiler::CompiledPOMDP>(std::move(model));
  e.flat = std::make_shared<FactoredFlatModel>(*m, options);
  e.model = std::move(m);
  return e;
}

Session::Session(Engine engine) : engine_(std::move(engine)) {
  belief_ = engine_.flat->initial_belief();
  record(std::nullopt, {});
}

Session::Session(Engine engine, std::vector<double> initial) : engine_(std::move(engine)) {
  if (initial.size() != engine_.flat->num_states())
    throw SimulationError("invalid_belief", "initial belief has the wrong number of states");
  belief_ = std::move(initial);
  record(std::nullopt, {});
}

std::vector<double> initial_belief(const Engine& engine, const std::map<std::string, double>& ability_priors) {
  const auto& f = *engine.flat;
  const auto& spec = engine.model->spec;
  std::vector<double> prior;
  for (const auto& a : spec.abilities) prior.push_back(a.prior);
  for (const auto& [name, p] : ability_priors) {
    auto k = spec.ability_index(name);
    if (!k) throw SimulationError("unknown_ability", "unknown ability '" + name + "'");
    if (!(p >= 0.0 && p <= 1.0)) throw SimulationError("invalid_prior", "prior of '" + name + "' is outside [0, 1]");
    prior[*k] = p;
  }
  const std::size_t nY = f.ability_states();
  std::vector<double> ability(nY, 1.0);
  for (std::size_t y = 0; y < nY; ++y)
    for (std::size_t k = 0; k < f.num_abilities(); ++k) ability[y] *= f.has_ability(y, k) ? prior[k] : 1.0 - prior[k];
  // The initial belief factors into a (task, behaviour) part and the abilities.
  std::vector<double> b = f.initial_belief();
  for (std::size_t blk = 0; blk < f.task_states() * f.behaviours(); ++blk) {
    double* p = b.data() + blk * nY;
    const double mass = kernels::sum({p, nY});
    for (std::size_t y = 0; y < nY; ++y) p[y] = mass * ability[y];
  }
  return b;
}

double Session::goal_probability() const {
  const auto& f = *engine_.flat;
  const auto& goal = f.goal_task_states();
  const std::size_t per_task = f.behaviours() * f.ability_states();
  double p = 0.0;
  for (std::size_t t = 0; t < f.task_states(); ++t)
    if (goal[t]) p += kernels::sum({belief_.data() + t * per_task, per_task});
  return p;
}

std::vector<VariableMarginal> Session::marginals() const {
  const auto& f = *engine_.flat;
  const auto& m = *engine_.model;
  const auto& spec = m.spec;
  std::vector<VariableMarginal> out;
  for (const auto& v : spec.variables) out.push_back({"task", v.name, v.values, std::vector<double>(v.values.size())});
  const std::size_t beh = out.size();
  out.push_back({"behaviour", std::string(task::kBehaviourVar), spec.behaviour_values(),
                 std::vector<double>(f.behaviours())});
  const std::size_t abil = out.size();
  for (const auto& a : spec.abilities) out.push_back({"ability", a.name, {"no", "yes"}, {0.0, 0.0}});

  const std::size_t nY = f.ability_states();
  std::vector<double> ability_yes(f.num_abilities(), 0.0);
  for (std::size_t t = 0; t < f.task_states(); ++t) {
    auto ts = task::decode(spec, t);
    for (std::size_t b = 0; b < f.behaviours(); ++b) {
      const double* blk = belief_.data() + (t * f.behaviours() + b) * nY;
      double mass = 0.0;
      for (std::size_t y = 0; y < nY; ++y) {
        if (blk[y] == 0.0) continue;
        mass += blk[y];
        for (std::size_t k = 0; k < f.num_abilities(); ++k)
          if (f.has_ability(y, k)) ability_yes[k] += blk[y];
      }
      if (mass == 0.0) continue;
      for (std::size_t i = 0; i < ts.size(); ++i) out[i].probabilities[ts[i]] += mass;
      out[beh].probabilities[b] += mass;
    }
  }
  for (std::size_t k = 0; k < f.num_abilities(); ++k)
    out[abil + k].probabilities = {1.0 - ability_yes[k], ability_yes[k]};
  return out;
}

void Session::record(std::optional<std::string> action, std::map<std::string, std::string> observation) {
  StepRecord r;
  r.index = static_cast<int>(trace_.size());
  r.action = std::move(action);
  r.observation = std::move(observation);
  r.marginals = marginals();
  r.goal_probability = goal_probability();
  if (engine_.policy) {
    r.action_values = solver::action_values(*engine_.policy, belief_);
    r.recommended = r.action_values[solver::best_action(r.action_values)].action;
  }
  trace_.push_back(std::move(r));
}

const StepRecord& Session::step(std::string_view action, const std::map<std::string, std::string>& readings) {
  const auto& m = *engine_.model;
  std::size_t a = m.actions.size();
  for (std::size_t i = 0; i < m.actions.size(); ++i)
    if (m.actions[i].name == action) a = i;
  if (a == m.actions.size()) throw SimulationError("unknown_action", "unknown action '" + std::string(action) + "'");
  std::vector<std::size_t> r;
  for (const auto& s : m.spec.sensors) {
    auto it = readings.find(s.name);
    if (it == readings.end()) throw SimulationError("missing_reading", "no reading for sensor '" + s.name + "'");
    auto pos = std::find(s.readings.begin(), s.readings.end(), it->second);
    if (pos == s.readings.end())
      throw SimulationError("invalid_reading", "sensor '" + s.name + "' has no reading '" + it->second + "'");
    r.push_back(static_cast<std::size_t>(pos - s.readings.begin()));
  }
  for (const auto& [name, value] : readings)
    if (std::none_of(m.spec.sensors.begin(), m.spec.sensors.end(), [&](const auto& s) { return s.name == name; }))
      throw SimulationError("unknown_sensor", "unknown sensor '" + name + "'");
  return step(a, r);
}

const StepRecord& Session::step(std::size_t a, const std::vector<std::size_t>& readings) {
  const auto& f = *engine_.flat;
  const auto& m = *engine_.model;
  if (a >= m.actions.size()) throw SimulationError("unknown_action", "action index out of range");
  if (readings.size() != m.spec.sensors.size())
    throw SimulationError("missing_reading", "one reading per sensor is required");
  for (std::size_t k = 0; k < readings.size(); ++k)
    if (readings[k] >= f.sensor_arity()[k])
      throw SimulationError("invalid_reading", "reading index out of range for sensor '" + m.spec.sensors[k].name + "'");

  std::vector<double> pred(f.num_states());
  f.forward(a, belief_, pred);
  std::vector<double> post = pred;
  f.weight_by_observation(a, f.observation_index(readings), post);
  double z = kernels::sum(post);
  if (!(z > 0.0)) {
    const std::size_t nY = f.ability_states();
    std::string culprit;
    for (std::size_t k = 0; k < readings.size() && culprit.empty(); ++k) {
      double mass = 0.0;
      for (std::size_t blk = 0; blk < f.task_states() * f.behaviours(); ++blk)
        mass += f.sensor_likelihood(k, readings[k], blk / f.behaviours(), blk % f.behaviours()) *
                kernels::sum({pred.data() + blk * nY, nY});
      if (!(mass > 0.0)) culprit = m.spec.sensors[k].name;
    }
    throw SimulationError("impossible_observation",
                          culprit.empty() ? "the readings are jointly impossible under the current belief"
                                          : "reading of sensor '" + culprit + "' is impossible under the current belief");
  }
  kernels::scale(1.0 / z, post);
  belief_ = std::move(post);
  std::map<std::string, std::string> obs;
  for (std::size_t k = 0; k < readings.size(); ++k)
    obs[m.spec.sensors[k].name] = m.spec.sensors[k].readings[readings[k]];
  record(m.actions[a].name, std::move(obs));
  return trace_.back();
}

// ---------------------------------------------------------------------------

ClientProfile forgetful_compliant(const task::SpecDocument& spec) {
  const std::size_t n = spec.abilities.size();
  return {"forgetful-compliant", std::vector<double>(n, 1.0), std::vector<double>(n, 1.0), std::vector<bool>(n, false)};
}

ClientProfile fully_able(const task::SpecDocument& spec) {
  const std::size_t n = spec.abilities.size();
  return {"fully-able", std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), std::vector<bool>(n, true)};
}

namespace {

template <class F>
std::size_t sample_index(std::size_t n, F&& prob, std::mt19937_64& rng) {
  double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng), acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = prob(i);
    if (p <= 0.0) continue;
    last = i;
    acc += p;
    if (r < acc) return i;
  }
  return last;
}

}  // namespace

ClientStep scripted_client_step(const FactoredFlatModel& f, const compiler::CompiledPOMDP& m,
                                const ClientProfile& profile, std::size_t true_state, std::size_t action,
                                std::mt19937_64& rng) {
  auto s = f.decode(true_state);
  auto bern = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
  const auto& act = m.actions[action];
  std::size_t y2 = 0;
  for (std::size_t k = 0; k < f.num_abilities(); ++k) {
    bool had = f.has_ability(s.abilities, k);
    bool now;
    if (act.ability && *act.ability == k) now = had || bern(profile.prompt_compliance[k]);
    else now = had && !bern(profile.ability_loss[k]);
    y2 = (y2 << 1) | (now ? 1u : 0u);
  }
  std::size_t b2 = sample_index(
      f.behaviours(), [&](std::size_t b) { return f.behaviour_probability(s.task, s.behaviour, b, y2); }, rng);
  const auto& succ = f.task_successors(b2, s.task);
  std::size_t t2 = succ[sample_index(succ.size(), [&](std::size_t i) { return succ[i].second; }, rng)].first;
  ClientStep out;
  out.state = f.index({t2, b2, y2});
  for (std::size_t k = 0; k < f.sensor_arity().size(); ++k)
    out.readings.push_back(sample_index(
        f.sensor_arity()[k], [&](std::size_t r) { return f.sensor_likelihood(k, r, t2, b2); }, rng));
  return out;
}

Episode run_episode(const Engine& engine, const ClientProfile& profile, int max_steps, std::uint64_t seed,
                    double goal_threshold) {
  Episode ep;
  if (max_steps <= 0) return ep;
  std::mt19937_64 rng(seed);
  const auto& f = *engine.flat;
  const auto& m = *engine.model;
  Session session(engine);
  std::size_t y = 0;
  for (std::size_t k = 0; k < f.num_abilities(); ++k) y = (y << 1) | (profile.initial_abilities[k] ? 1u : 0u);
  std::size_t truth = f.index({task::encode(m.spec, task::initial_state(m.spec)), m.spec.behaviours.size(), y});
  session.set_true_state(truth);
  for (int i = 0; i < max_steps; ++i) {
    if (session.goal_probability() >= goal_threshold) break;
    std::size_t a = m.action_index(session.last().recommended);
    auto cs = scripted_client_step(f, m, profile, truth, a, rng);
    truth = cs.state;
    session.step(a, cs.readings);
    session.set_true_state(truth);
    if (m.actions[a].ability) ep.prompts.push_back(m.spec.abilities[*m.actions[a].ability].name);
  }
  ep.reached_goal = session.goal_probability() >= goal_threshold;
  ep.trace = session.trace();
  return ep;
}

// ---------------------------------------------------------------------------

std::string trace_table(const std::vector<StepRecord>& trace) {
  if (trace.empty()) return "";
  std::vector<std::string> header{"step"};
  for (const auto& [sensor, _] : trace.back().observation) header.push_back(sensor);
  for (const auto& v : trace.front().marginals)
    for (const auto& val : v.values) {
      if (v.kind == "ability" && val == "no") continue;
      header.push_back(v.kind == "ability" ? v.name : v.name + "=" + val);
    }
  header.push_back("P(goal)");
  header.push_back("recommended");

  std::vector<std::vector<std::string>> rows;
  char buf[32];
  for (const auto& r : trace) {
    std::vector<std::string> row{std::to_string(r.index)};
    for (const auto& [sensor, _] : trace.back().observation) {
      auto it = r.observation.find(sensor);
      row.push_back(it == r.observation.end() ? "-" : it->second);
    }
    for (const auto& v : r.marginals)
      for (std::size_t i = 0; i < v.values.size(); ++i) {
        if (v.kind == "ability" && v.values[i] == "no") continue;
        std::snprintf(buf, sizeof buf, "%.3f", v.probabilities[i]);
        row.push_back(buf);
      }
    std::snprintf(buf, sizeof buf, "%.3f", r.goal_probability);
    row.push_back(buf);
    row.push_back(r.recommended.empty() ? "-" : r.recommended);
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      out += cells[c] + std::string(width[c] - cells[c].size(), ' ');
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  for (const auto& row : rows) out += line(row);
  return out;
}

nlohmann::json to_json(const StepRecord& r) {
  using nlohmann::json;
  json s;
  s["index"] = r.index;
  s["action"] = r.action ? json(*r.action) : json(nullptr);
  s["observation"] = r.observation;
  json marg = json::object();
  for (const auto& v : r.marginals) {
    json vals = json::object();
    for (std::size_t i = 0; i < v.values.size(); ++i) vals[v.values[i]] = v.probabilities[i];
    marg[v.name] = {{"kind", v.kind}, {"values", vals}};
  }
  s["marginals"] = marg;
  json av = json::array();
  for (const auto& x : r.action_values) av.push_back({{"action", x.action}, {"value", x.value}});
  s["action_values"] = av;
  s["recommended"] = r.recommended;
  s["goal_probability"] = r.goal_probability;
  if (r.true_state) s["true_state"] = *r.true_state;
  return s;
}

std::string trace_json(const std::vector<StepRecord>& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& r : trace) steps.push_back(to_json(r));
  return nlohmann::json{{"steps", steps}}.dump(2) + "\n";
}

}  // namespace snap::sim
