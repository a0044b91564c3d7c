#include "snap/task_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

namespace snap::task {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Lookups

namespace {

template <class T>
std::optional<std::size_t> index_by_name(const std::vector<T>& xs, std::string_view name) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i].name == name) return i;
  return std::nullopt;
}

}  // namespace

const TaskVariableSpec* SpecDocument::find_variable(std::string_view name) const {
  auto i = variable_index(name);
  return i ? &variables[*i] : nullptr;
}
const AbilitySpec* SpecDocument::find_ability(std::string_view name) const {
  auto i = ability_index(name);
  return i ? &abilities[*i] : nullptr;
}
const BehaviourSpec* SpecDocument::find_behaviour(std::string_view name) const {
  auto i = behaviour_index(name);
  return i ? &behaviours[*i] : nullptr;
}
std::optional<std::size_t> SpecDocument::variable_index(std::string_view name) const {
  return index_by_name(variables, name);
}
std::optional<std::size_t> SpecDocument::ability_index(std::string_view name) const {
  return index_by_name(abilities, name);
}
std::optional<std::size_t> SpecDocument::behaviour_index(std::string_view name) const {
  return index_by_name(behaviours, name);
}

std::size_t SpecDocument::value_index(std::size_t var, std::string_view value) const {
  const auto& vals = variables.at(var).values;
  auto it = std::find(vals.begin(), vals.end(), value);
  if (it == vals.end())
    throw std::out_of_range("unknown value '" + std::string(value) + "' for '" + variables[var].name + "'");
  return static_cast<std::size_t>(it - vals.begin());
}

std::vector<std::string> SpecDocument::behaviour_values() const {
  std::vector<std::string> out;
  for (const auto& b : behaviours) out.push_back(b.name);
  out.emplace_back(kNothing);
  out.emplace_back(kOther);
  return out;
}

std::vector<std::string> SpecDocument::sensor_target_values(const SensorSpec& s) const {
  if (auto v = find_variable(s.target)) return v->values;
  if (s.target == kBehaviourVar) return behaviour_values();
  if (find_behaviour(s.target) || s.target == kNothing || s.target == kOther) return {"no", "yes"};
  return {};
}

std::string_view kind_name(AbilityKind k) {
  switch (k) {
    case AbilityKind::recall: return "recall";
    case AbilityKind::recognition: return "recognition";
    case AbilityKind::affordance: return "affordance";
  }
  return "recall";
}

std::optional<AbilityKind> parse_kind(std::string_view s) {
  if (s == "recall") return AbilityKind::recall;
  if (s == "recognition") return AbilityKind::recognition;
  if (s == "affordance") return AbilityKind::affordance;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// JSON reading

namespace {

std::string at(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}
std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

class Reader {
 public:
  explicit Reader(Diagnostics& out) : out_(out) {}

  void fail(const std::string& path, const std::string& code, const std::string& msg) {
    out_.push_back(error(code, path, msg));
  }

  const json* field(const json& obj, const std::string& key, const std::string& path, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(at(path, key), "missing_field", "required field '" + key + "' is missing");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string(const json& j, const std::string& path) {
    if (!j.is_string()) {
      fail(path, "type_error", "expected a string");
      return std::nullopt;
    }
    return j.get<std::string>();
  }

  std::optional<double> number(const json& j, const std::string& path) {
    if (!j.is_number()) {
      fail(path, "type_error", "expected a number");
      return std::nullopt;
    }
    return j.get<double>();
  }

  std::vector<std::string> strings(const json& j, const std::string& path) {
    std::vector<std::string> out;
    if (!j.is_array()) {
      fail(path, "type_error", "expected an array of strings");
      return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i)
      if (auto s = string(j[i], at(path, i))) out.push_back(*s);
    return out;
  }

  PartialState partial(const json& j, const std::string& path) {
    PartialState p;
    if (!j.is_object()) {
      fail(path, "type_error", "expected an object mapping variable names to values");
      return p;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::string sub = at(path, it.key());
      if (it->is_string()) {
        p[it.key()] = {it->get<std::string>()};
      } else if (it->is_array()) {
        auto vals = strings(*it, sub);
        if (vals.empty()) fail(sub, "type_error", "value list must not be empty");
        else p[it.key()] = std::move(vals);
      } else {
        fail(sub, "type_error", "expected a value name or a list of value names");
      }
    }
    return p;
  }

  template <class T, class F>
  std::vector<T> list(const json& root, const std::string& key, bool required, F&& each) {
    std::vector<T> out;
    const json* arr = field(root, key, "", required);
    if (!arr) return out;
    if (!arr->is_array()) {
      fail(key, "type_error", "expected an array");
      return out;
    }
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const json& el = (*arr)[i];
      std::string path = at(key, i);
      if (!el.is_object()) {
        fail(path, "type_error", "expected an object");
        continue;
      }
      out.push_back(each(el, path));
    }
    return out;
  }

 private:
  Diagnostics& out_;
};

std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

SpecDocument read_document(const json& root, Reader& r,
                           std::vector<std::map<std::string, std::vector<double>>>& raw_noise) {
  SpecDocument doc;
  if (const json* m = r.field(root, "metadata", "", false)) {
    if (!m->is_object()) {
      r.fail("metadata", "type_error", "expected an object");
    } else {
      if (const json* v = r.field(*m, "id", "metadata", false))
        if (auto s = r.string(*v, "metadata.id")) doc.metadata.id = *s;
      if (const json* v = r.field(*m, "title", "metadata", false))
        if (auto s = r.string(*v, "metadata.title")) doc.metadata.title = *s;
      if (const json* v = r.field(*m, "revision", "metadata", false)) {
        if (!v->is_number_integer()) r.fail("metadata.revision", "type_error", "expected an integer");
        else doc.metadata.revision = v->get<int>();
      }
    }
  }

  doc.variables = r.list<TaskVariableSpec>(root, "variables", true, [&](const json& el, const std::string& p) {
    TaskVariableSpec v;
    if (const json* f = r.field(el, "name", p, true))
      if (auto s = r.string(*f, at(p, "name"))) v.name = *s;
    if (const json* f = r.field(el, "values", p, true)) v.values = r.strings(*f, at(p, "values"));
    if (const json* f = r.field(el, "initial_value", p, true))
      if (auto s = r.string(*f, at(p, "initial_value"))) v.initial_value = *s;
    return v;
  });

  doc.abilities = r.list<AbilitySpec>(root, "abilities", false, [&](const json& el, const std::string& p) {
    AbilitySpec a;
    if (const json* f = r.field(el, "name", p, true))
      if (auto s = r.string(*f, at(p, "name"))) a.name = *s;
    if (const json* f = r.field(el, "kind", p, true)) {
      if (auto s = r.string(*f, at(p, "kind"))) {
        if (auto k = parse_kind(*s)) a.kind = *k;
        else r.fail(at(p, "kind"), "unknown_kind", "ability kind must be recall, recognition or affordance");
      }
    }
    if (const json* f = r.field(el, "dyn_prob", p, true)) {
      std::string dp = at(p, "dyn_prob");
      if (!f->is_object()) {
        r.fail(dp, "type_error", "expected an object");
      } else {
        auto rd = [&](const char* key, double& dst) {
          if (const json* g = r.field(*f, key, dp, true))
            if (auto x = r.number(*g, at(dp, key))) dst = *x;
        };
        rd("keep_prompt", a.dyn_prob.keep_prompt);
        rd("gain_prompt", a.dyn_prob.gain_prompt);
        rd("keep", a.dyn_prob.keep);
        rd("gain", a.dyn_prob.gain);
      }
    }
    if (const json* f = r.field(el, "prompt_cost", p, false))
      if (auto x = r.number(*f, at(p, "prompt_cost"))) a.prompt_cost = *x;
    if (const json* f = r.field(el, "prior", p, false))
      if (auto x = r.number(*f, at(p, "prior"))) a.prior = *x;
    if (const json* f = r.field(el, "precondition_abilities", p, false))
      a.precondition_abilities = r.strings(*f, at(p, "precondition_abilities"));
    return a;
  });

  doc.behaviours = r.list<BehaviourSpec>(root, "behaviours", true, [&](const json& el, const std::string& p) {
    BehaviourSpec b;
    if (const json* f = r.field(el, "name", p, true))
      if (auto s = r.string(*f, at(p, "name"))) b.name = *s;
    if (const json* f = r.field(el, "clauses", p, true)) {
      std::string cp = at(p, "clauses");
      if (!f->is_array()) {
        r.fail(cp, "type_error", "expected an array");
      } else {
        for (std::size_t i = 0; i < f->size(); ++i) {
          const json& c = (*f)[i];
          std::string ip = at(cp, i);
          if (!c.is_object()) {
            r.fail(ip, "type_error", "expected an object");
            continue;
          }
          Clause cl;
          if (const json* g = r.field(c, "preconditions", ip, false)) cl.preconditions = r.partial(*g, at(ip, "preconditions"));
          if (const json* g = r.field(c, "effects", ip, true)) cl.effects = r.partial(*g, at(ip, "effects"));
          b.clauses.push_back(std::move(cl));
        }
      }
    }
    return b;
  });

  doc.iu_rows = r.list<IURow>(root, "iu_rows", true, [&](const json& el, const std::string& p) {
    IURow row;
    if (const json* f = r.field(el, "index", p, true)) {
      if (!f->is_number_integer()) r.fail(at(p, "index"), "type_error", "expected an integer");
      else row.index = f->get<int>();
    }
    if (const json* f = r.field(el, "goals", p, false)) row.goals = r.strings(*f, at(p, "goals"));
    if (const json* f = r.field(el, "relevant_state", p, true)) row.relevant_state = r.partial(*f, at(p, "relevant_state"));
    if (const json* f = r.field(el, "required_abilities", p, false))
      row.required_abilities = r.strings(*f, at(p, "required_abilities"));
    if (const json* f = r.field(el, "behaviour", p, true))
      if (auto s = r.string(*f, at(p, "behaviour"))) row.behaviour = *s;
    if (const json* f = r.field(el, "probability", p, false))
      if (!f->is_null())
        if (auto x = r.number(*f, at(p, "probability"))) row.probability = *x;
    return row;
  });

  doc.sensors = r.list<SensorSpec>(root, "sensors", false, [&](const json& el, const std::string& p) {
    SensorSpec s;
    if (const json* f = r.field(el, "name", p, true))
      if (auto x = r.string(*f, at(p, "name"))) s.name = *x;
    if (const json* f = r.field(el, "target", p, true))
      if (auto x = r.string(*f, at(p, "target"))) s.target = *x;
    if (const json* f = r.field(el, "readings", p, true)) s.readings = r.strings(*f, at(p, "readings"));
    std::map<std::string, std::vector<double>> noise;
    if (const json* f = r.field(el, "noise", p, true)) {
      std::string np = at(p, "noise");
      if (!f->is_object()) {
        r.fail(np, "type_error", "expected an object mapping target values to probability rows");
      } else {
        for (auto it = f->begin(); it != f->end(); ++it) {
          std::string rp = at(np, it.key());
          if (!it->is_array()) {
            r.fail(rp, "type_error", "expected an array of probabilities");
            continue;
          }
          std::vector<double> row;
          for (std::size_t i = 0; i < it->size(); ++i)
            if (auto x = r.number((*it)[i], at(rp, i))) row.push_back(*x);
          noise[it.key()] = std::move(row);
        }
      }
    }
    raw_noise.push_back(std::move(noise));
    return s;
  });

  doc.rewards = r.list<RewardEntry>(root, "rewards", true, [&](const json& el, const std::string& p) {
    RewardEntry e;
    if (const json* f = r.field(el, "state_set", p, true)) e.state_set = r.partial(*f, at(p, "state_set"));
    if (const json* f = r.field(el, "value", p, true))
      if (auto x = r.number(*f, at(p, "value"))) e.value = *x;
    if (const json* f = r.field(el, "is_goal", p, false)) {
      if (!f->is_boolean()) r.fail(at(p, "is_goal"), "type_error", "expected a boolean");
      else e.is_goal = f->get<bool>();
    }
    return e;
  });

  if (const json* c = r.field(root, "config", "", false)) {
    if (!c->is_object()) {
      r.fail("config", "type_error", "expected an object");
    } else {
      auto rd = [&](const char* key, double& dst) {
        if (const json* g = r.field(*c, key, "config", false))
          if (auto x = r.number(*g, at("config", key))) dst = *x;
      };
      rd("rho", doc.config.rho);
      rd("kappa", doc.config.kappa);
      rd("other_noise", doc.config.other_noise);
      rd("discount", doc.config.discount);
      if (const json* g = r.field(*c, "horizon", "config", false)) {
        if (g->is_null()) {
        } else if (!g->is_number_integer()) {
          r.fail("config.horizon", "type_error", "expected an integer or null");
        } else {
          doc.config.horizon = g->get<int>();
        }
      }
    }
  }

  static const std::set<std::string> known = {"metadata", "variables", "abilities", "behaviours",
                                              "iu_rows", "sensors", "rewards", "config"};
  for (auto it = root.begin(); it != root.end(); ++it)
    if (!known.count(it.key())) r.fail(it.key(), "unknown_field", "unknown top-level key '" + it.key() + "'");
  return doc;
}

// Orders sensor noise rows by target value once targets are resolvable.
void place_noise(SpecDocument& doc, const std::vector<std::map<std::string, std::vector<double>>>& raw,
                 Diagnostics& out) {
  for (std::size_t i = 0; i < doc.sensors.size() && i < raw.size(); ++i) {
    SensorSpec& s = doc.sensors[i];
    std::string np = "sensors[" + std::to_string(i) + "].noise";
    auto targets = doc.sensor_target_values(s);
    if (targets.empty()) continue;  // reported by the structural pass
    for (const auto& [k, row] : raw[i])
      if (std::find(targets.begin(), targets.end(), k) == targets.end())
        out.push_back(error("unknown_value", at(np, k), "'" + k + "' is not a value of sensor target '" + s.target + "'"));
    for (const auto& t : targets) {
      auto it = raw[i].find(t);
      if (it == raw[i].end()) {
        out.push_back(error("missing_field", at(np, t), "no noise row for target value '" + t + "'"));
        s.noise.emplace_back(s.readings.size(), 0.0);
      } else {
        s.noise.push_back(it->second);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Structural checks

bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

class Checker {
 public:
  Checker(const SpecDocument& d, Diagnostics& out) : d_(d), out_(out) {}

  void ident(const std::string& name, const std::string& path) {
    if (!valid_identifier(name))
      out_.push_back(error("invalid_identifier", path, "'" + name + "' is not a valid identifier"));
  }

  void probability(double x, const std::string& path, const std::string& what) {
    if (!in_unit(x))
      out_.push_back(error("probability_out_of_range", path,
                           what + " must lie in [0, 1], got " + std::to_string(x)));
  }

  void partial(const PartialState& p, const std::string& path, bool single_valued) {
    for (const auto& [var, vals] : p) {
      std::string vp = at(path, var);
      const TaskVariableSpec* v = d_.find_variable(var);
      if (!v) {
        out_.push_back(error("unknown_reference", vp, "unknown task variable '" + var + "'"));
        continue;
      }
      if (single_valued && vals.size() != 1)
        out_.push_back(error("multi_valued_effect", vp, "an effect must set exactly one value"));
      std::set<std::string> seen;
      for (const auto& x : vals) {
        if (std::find(v->values.begin(), v->values.end(), x) == v->values.end())
          out_.push_back(error("unknown_value", vp, "'" + x + "' is not a value of '" + var + "'"));
        if (!seen.insert(x).second)
          out_.push_back(error("duplicate_value", vp, "value '" + x + "' listed twice"));
      }
    }
  }

  void run() {
    std::map<std::string, std::string> namespace_owner;  // variables and sensors
    auto claim = [&](const std::string& name, const std::string& path) {
      auto [it, fresh] = namespace_owner.emplace(name, path);
      if (!fresh)
        out_.push_back(error("name_collision", path, "'" + name + "' already names " + it->second +
                                                         "; sensors and task variables share one name space"));
    };
    auto reserved = [&](const std::string& name, const std::string& path) {
      if (name == kBehaviourVar || name == kActionVar || name == kNothing || name == kOther || name == kDoNothing)
        out_.push_back(error("reserved_name", path, "'" + name + "' is reserved"));
    };

    for (std::size_t i = 0; i < d_.variables.size(); ++i) {
      const auto& v = d_.variables[i];
      std::string p = "variables[" + std::to_string(i) + "]";
      ident(v.name, at(p, "name"));
      reserved(v.name, at(p, "name"));
      claim(v.name, "variable " + p);
      if (v.values.size() < 2)
        out_.push_back(error("too_few_values", at(p, "values"), "a task variable needs at least 2 values"));
      std::set<std::string> seen;
      for (std::size_t k = 0; k < v.values.size(); ++k) {
        ident(v.values[k], at(at(p, "values"), k));
        if (!seen.insert(v.values[k]).second)
          out_.push_back(error("duplicate_value", at(at(p, "values"), k), "value '" + v.values[k] + "' listed twice"));
      }
      if (std::find(v.values.begin(), v.values.end(), v.initial_value) == v.values.end())
        out_.push_back(error("unknown_value", at(p, "initial_value"),
                             "initial value '" + v.initial_value + "' is not among the values"));
    }

    std::set<std::string> abil;
    for (std::size_t i = 0; i < d_.abilities.size(); ++i) {
      const auto& a = d_.abilities[i];
      std::string p = "abilities[" + std::to_string(i) + "]";
      ident(a.name, at(p, "name"));
      reserved(a.name, at(p, "name"));
      if (!abil.insert(a.name).second)
        out_.push_back(error("duplicate_name", at(p, "name"), "ability '" + a.name + "' declared twice"));
      std::string dp = at(p, "dyn_prob");
      probability(a.dyn_prob.keep_prompt, at(dp, "keep_prompt"), "probability");
      probability(a.dyn_prob.gain_prompt, at(dp, "gain_prompt"), "probability");
      probability(a.dyn_prob.keep, at(dp, "keep"), "probability");
      probability(a.dyn_prob.gain, at(dp, "gain"), "probability");
      probability(a.prior, at(p, "prior"), "prior");
      if (!std::isfinite(a.prompt_cost) || a.prompt_cost < 0.0)
        out_.push_back(error("value_out_of_range", at(p, "prompt_cost"), "prompt cost must be a nonnegative real"));
      for (std::size_t k = 0; k < a.precondition_abilities.size(); ++k)
        if (!d_.find_ability(a.precondition_abilities[k]))
          out_.push_back(error("unknown_reference", at(at(p, "precondition_abilities"), k),
                               "unknown ability '" + a.precondition_abilities[k] + "'"));
    }

    std::set<std::string> behs;
    for (std::size_t i = 0; i < d_.behaviours.size(); ++i) {
      const auto& b = d_.behaviours[i];
      std::string p = "behaviours[" + std::to_string(i) + "]";
      ident(b.name, at(p, "name"));
      reserved(b.name, at(p, "name"));
      if (!behs.insert(b.name).second)
        out_.push_back(error("duplicate_name", at(p, "name"), "behaviour '" + b.name + "' declared twice"));
      for (std::size_t k = 0; k < b.clauses.size(); ++k) {
        std::string cp = at(at(p, "clauses"), k);
        partial(b.clauses[k].preconditions, at(cp, "preconditions"), false);
        partial(b.clauses[k].effects, at(cp, "effects"), true);
        if (b.clauses[k].effects.empty())
          out_.push_back(error("empty_effects", at(cp, "effects"), "a clause needs at least one effect"));
      }
    }

    std::set<int> indices;
    for (std::size_t i = 0; i < d_.iu_rows.size(); ++i) {
      const auto& r = d_.iu_rows[i];
      std::string p = "iu_rows[" + std::to_string(i) + "]";
      if (r.index < 1) out_.push_back(error("value_out_of_range", at(p, "index"), "row index must be positive", {r.index}));
      if (!indices.insert(r.index).second)
        out_.push_back(error("duplicate_row_index", at(p, "index"),
                             "row index " + std::to_string(r.index) + " used twice", {r.index}));
      if (r.relevant_state.empty())
        out_.push_back(error("empty_relevant_state", at(p, "relevant_state"), "relevant state must not be empty", {r.index}));
      partial(r.relevant_state, at(p, "relevant_state"), false);
      for (std::size_t k = 0; k < r.required_abilities.size(); ++k)
        if (!d_.find_ability(r.required_abilities[k]))
          out_.push_back(error("unknown_reference", at(at(p, "required_abilities"), k),
                               "unknown ability '" + r.required_abilities[k] + "'", {r.index}));
      if (!d_.find_behaviour(r.behaviour))
        out_.push_back(error("unknown_reference", at(p, "behaviour"), "unknown behaviour '" + r.behaviour + "'", {r.index}));
      if (r.probability && (!std::isfinite(*r.probability) || *r.probability <= 0.0 || *r.probability > 1.0))
        out_.push_back(error("probability_out_of_range", at(p, "probability"), "row probability must lie in (0, 1]", {r.index}));
    }

    for (std::size_t i = 0; i < d_.sensors.size(); ++i) {
      const auto& s = d_.sensors[i];
      std::string p = "sensors[" + std::to_string(i) + "]";
      ident(s.name, at(p, "name"));
      reserved(s.name, at(p, "name"));
      claim(s.name, "sensor " + p);
      auto targets = d_.sensor_target_values(s);
      if (targets.empty()) {
        out_.push_back(error("unknown_reference", at(p, "target"),
                             "sensor target '" + s.target + "' is neither a task variable nor a behaviour"));
        continue;
      }
      if (s.readings.empty())
        out_.push_back(error("too_few_values", at(p, "readings"), "a sensor needs at least one reading"));
      std::set<std::string> seen;
      for (std::size_t k = 0; k < s.readings.size(); ++k) {
        ident(s.readings[k], at(at(p, "readings"), k));
        if (!seen.insert(s.readings[k]).second)
          out_.push_back(error("duplicate_value", at(at(p, "readings"), k), "reading '" + s.readings[k] + "' listed twice"));
      }
      if (s.noise.size() != targets.size()) {
        out_.push_back(error("shape_mismatch", at(p, "noise"), "need one noise row per target value"));
        continue;
      }
      for (std::size_t t = 0; t < targets.size(); ++t) {
        std::string rp = at(at(p, "noise"), targets[t]);
        if (s.noise[t].size() != s.readings.size()) {
          out_.push_back(error("shape_mismatch", rp, "noise row needs one entry per reading"));
          continue;
        }
        for (std::size_t k = 0; k < s.readings.size(); ++k) probability(s.noise[t][k], at(rp, k), "noise entry");
      }
    }

    for (std::size_t i = 0; i < d_.rewards.size(); ++i) {
      const auto& e = d_.rewards[i];
      std::string p = "rewards[" + std::to_string(i) + "]";
      partial(e.state_set, at(p, "state_set"), false);
      if (!std::isfinite(e.value)) out_.push_back(error("value_out_of_range", at(p, "value"), "reward must be finite"));
    }

    const auto& c = d_.config;
    probability(c.rho, "config.rho", "rho");
    probability(c.other_noise, "config.other_noise", "other_noise");
    if (!std::isfinite(c.kappa) || c.kappa < 0.0)
      out_.push_back(error("value_out_of_range", "config.kappa", "kappa must be a nonnegative real"));
    if (!std::isfinite(c.discount) || c.discount <= 0.0 || c.discount >= 1.0)
      out_.push_back(error("value_out_of_range", "config.discount", "discount must lie in (0, 1)"));
    if (c.horizon && *c.horizon <= 0)
      out_.push_back(error("value_out_of_range", "config.horizon", "horizon must be positive"));
  }

 private:
  const SpecDocument& d_;
  Diagnostics& out_;
};

// ---------------------------------------------------------------------------
// JSON writing

json partial_json(const PartialState& p) {
  json o = json::object();
  for (const auto& [k, vals] : p) {
    if (vals.size() == 1) o[k] = vals[0];
    else o[k] = vals;
  }
  return o;
}

}  // namespace

Diagnostics structural_diagnostics(const SpecDocument& spec) {
  Diagnostics out;
  Checker(spec, out).run();
  return out;
}

LoadResult load_spec(std::string_view text) {
  LoadResult res;
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    res.diagnostics.push_back(error("syntax_error", "line " + std::to_string(line) + ", column " + std::to_string(col),
                                    e.what()));
    return res;
  }
  if (!root.is_object()) {
    res.diagnostics.push_back(error("type_error", "", "a spec document must be a JSON object"));
    return res;
  }
  Reader r(res.diagnostics);
  std::vector<std::map<std::string, std::vector<double>>> raw_noise;
  SpecDocument doc = read_document(root, r, raw_noise);
  place_noise(doc, raw_noise, res.diagnostics);
  if (!has_errors(res.diagnostics)) {
    auto more = structural_diagnostics(doc);
    res.diagnostics.insert(res.diagnostics.end(), more.begin(), more.end());
  }
  if (!has_errors(res.diagnostics)) res.spec = std::move(doc);
  return res;
}

LoadResult load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    LoadResult res;
    res.diagnostics.push_back(error("io_error", path.string(), "cannot open file"));
    return res;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_spec(ss.str());
}

std::string save_spec(const SpecDocument& d) {
  json root;
  root["metadata"] = {{"id", d.metadata.id}, {"title", d.metadata.title}, {"revision", d.metadata.revision}};
  root["variables"] = json::array();
  for (const auto& v : d.variables)
    root["variables"].push_back({{"name", v.name}, {"values", v.values}, {"initial_value", v.initial_value}});
  root["abilities"] = json::array();
  for (const auto& a : d.abilities)
    root["abilities"].push_back({{"name", a.name},
                                 {"kind", std::string(kind_name(a.kind))},
                                 {"dyn_prob",
                                  {{"keep_prompt", a.dyn_prob.keep_prompt},
                                   {"gain_prompt", a.dyn_prob.gain_prompt},
                                   {"keep", a.dyn_prob.keep},
                                   {"gain", a.dyn_prob.gain}}},
                                 {"prompt_cost", a.prompt_cost},
                                 {"prior", a.prior},
                                 {"precondition_abilities", a.precondition_abilities}});
  root["behaviours"] = json::array();
  for (const auto& b : d.behaviours) {
    json cl = json::array();
    for (const auto& c : b.clauses)
      cl.push_back({{"preconditions", partial_json(c.preconditions)}, {"effects", partial_json(c.effects)}});
    root["behaviours"].push_back({{"name", b.name}, {"clauses", cl}});
  }
  root["iu_rows"] = json::array();
  for (const auto& r : d.iu_rows) {
    json o = {{"index", r.index},
              {"goals", r.goals},
              {"relevant_state", partial_json(r.relevant_state)},
              {"required_abilities", r.required_abilities},
              {"behaviour", r.behaviour}};
    if (r.probability) o["probability"] = *r.probability;
    root["iu_rows"].push_back(o);
  }
  root["sensors"] = json::array();
  for (const auto& s : d.sensors) {
    json noise = json::object();
    auto targets = d.sensor_target_values(s);
    for (std::size_t t = 0; t < targets.size() && t < s.noise.size(); ++t) noise[targets[t]] = s.noise[t];
    root["sensors"].push_back({{"name", s.name}, {"target", s.target}, {"readings", s.readings}, {"noise", noise}});
  }
  root["rewards"] = json::array();
  for (const auto& e : d.rewards)
    root["rewards"].push_back({{"state_set", partial_json(e.state_set)}, {"value", e.value}, {"is_goal", e.is_goal}});
  json cfg = {{"rho", d.config.rho},
              {"kappa", d.config.kappa},
              {"other_noise", d.config.other_noise},
              {"discount", d.config.discount}};
  cfg["horizon"] = d.config.horizon ? json(*d.config.horizon) : json(nullptr);
  root["config"] = cfg;
  return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Enumeration

std::size_t task_state_count(const SpecDocument& spec) {
  std::size_t n = 1;
  for (const auto& v : spec.variables) n *= v.values.size();
  return n;
}

std::size_t encode(const SpecDocument& spec, const TaskState& s) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < spec.variables.size(); ++i) idx = idx * spec.variables[i].values.size() + s[i];
  return idx;
}

TaskState decode(const SpecDocument& spec, std::size_t index) {
  TaskState s(spec.variables.size());
  for (std::size_t i = spec.variables.size(); i-- > 0;) {
    std::size_t n = spec.variables[i].values.size();
    s[i] = static_cast<std::uint32_t>(index % n);
    index /= n;
  }
  return s;
}

TaskState initial_state(const SpecDocument& spec) {
  TaskState s(spec.variables.size());
  for (std::size_t i = 0; i < spec.variables.size(); ++i)
    s[i] = static_cast<std::uint32_t>(spec.value_index(i, spec.variables[i].initial_value));
  return s;
}

bool matches(const SpecDocument& spec, const PartialState& p, const TaskState& s) {
  for (const auto& [var, vals] : p) {
    auto i = spec.variable_index(var);
    if (!i) return false;
    const std::string& cur = spec.variables[*i].values[s[*i]];
    if (std::find(vals.begin(), vals.end(), cur) == vals.end()) return false;
  }
  return true;
}

std::vector<TaskState> enumerate_states(const SpecDocument& spec, const PartialState& partial) {
  std::vector<std::vector<std::uint32_t>> choices(spec.variables.size());
  for (std::size_t i = 0; i < spec.variables.size(); ++i) {
    auto it = partial.find(spec.variables[i].name);
    if (it == partial.end()) {
      for (std::uint32_t k = 0; k < spec.variables[i].values.size(); ++k) choices[i].push_back(k);
    } else {
      for (const auto& v : it->second) choices[i].push_back(static_cast<std::uint32_t>(spec.value_index(i, v)));
      std::sort(choices[i].begin(), choices[i].end());
    }
  }
  std::vector<TaskState> out;
  TaskState cur(spec.variables.size());
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == choices.size()) {
      out.push_back(cur);
      return;
    }
    for (auto k : choices[i]) {
      cur[i] = k;
      rec(i + 1);
    }
  };
  rec(0);
  return out;
}

std::string describe(const PartialState& p) {
  std::string out;
  for (const auto& [var, vals] : p) {
    if (!out.empty()) out += ", ";
    out += var;
    if (vals.size() == 1) {
      out += '=' + vals[0];
    } else {
      out += " in {";
      for (std::size_t i = 0; i < vals.size(); ++i) out += (i ? "," : "") + vals[i];
      out += '}';
    }
  }
  return out;
}

std::vector<bool> goal_mask(const SpecDocument& spec) {
  std::size_t n = task_state_count(spec);
  std::vector<bool> mask(n, false);
  std::vector<const RewardEntry*> goals;
  for (const auto& e : spec.rewards)
    if (e.is_goal) goals.push_back(&e);
  if (goals.empty() && !spec.rewards.empty()) {
    double best = -INFINITY;
    for (const auto& e : spec.rewards) best = std::max(best, e.value);
    for (const auto& e : spec.rewards)
      if (e.value == best) goals.push_back(&e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    TaskState s = decode(spec, i);
    for (const auto* e : goals)
      if (matches(spec, e->state_set, s)) {
        mask[i] = true;
        break;
      }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Store

SpecStore::SpecStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw StoreError(StoreError::Kind::io, "cannot create store directory " + dir_.string());
}

std::filesystem::path SpecStore::file_for(const std::string& id) const {
  if (!valid_identifier(id)) throw StoreError(StoreError::Kind::invalid, "invalid spec id '" + id + "'");
  return dir_ / (id + ".json");
}

std::mutex& SpecStore::lock_for(const std::string& id) {
  std::lock_guard g(map_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

namespace {
void write_atomic(const std::filesystem::path& file, const std::string& text) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError(StoreError::Kind::io, "cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, file);
}
}  // namespace

SpecDocument SpecStore::create(SpecDocument doc) {
  if (doc.metadata.id.empty()) {
    std::lock_guard g(map_mu_);
    while (std::filesystem::exists(dir_ / ("spec-" + std::to_string(next_auto_id_) + ".json"))) ++next_auto_id_;
    doc.metadata.id = "spec-" + std::to_string(next_auto_id_++);
  }
  auto file = file_for(doc.metadata.id);
  std::lock_guard g(lock_for(doc.metadata.id));
  if (std::filesystem::exists(file))
    throw StoreError(StoreError::Kind::conflict, "spec '" + doc.metadata.id + "' already exists");
  doc.metadata.revision = 1;
  write_atomic(file, save_spec(doc));
  return doc;
}

std::string SpecStore::read_text(const std::string& id) const {
  auto file = file_for(id);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StoreError(StoreError::Kind::not_found, "no spec '" + id + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SpecDocument SpecStore::read(const std::string& id) const {
  auto res = load_spec(read_text(id));
  if (!res.spec) throw StoreError(StoreError::Kind::invalid, "stored spec '" + id + "' no longer loads");
  return *res.spec;
}

SpecDocument SpecStore::update(SpecDocument doc) {
  auto file = file_for(doc.metadata.id);
  std::lock_guard g(lock_for(doc.metadata.id));
  if (!std::filesystem::exists(file)) throw StoreError(StoreError::Kind::not_found, "no spec '" + doc.metadata.id + "'");
  SpecDocument current = read(doc.metadata.id);
  if (current.metadata.revision != doc.metadata.revision)
    throw StoreError(StoreError::Kind::conflict, "stale revision " + std::to_string(doc.metadata.revision) +
                                                     "; stored revision is " + std::to_string(current.metadata.revision));
  doc.metadata.revision = current.metadata.revision + 1;
  write_atomic(file, save_spec(doc));
  return doc;
}

void SpecStore::remove(const std::string& id) {
  auto file = file_for(id);
  std::lock_guard g(lock_for(id));
  if (!std::filesystem::remove(file)) throw StoreError(StoreError::Kind::not_found, "no spec '" + id + "'");
}

std::vector<std::string> SpecStore::list() const {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(dir_))
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace snap::task
