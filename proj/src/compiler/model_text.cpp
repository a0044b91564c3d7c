#include <algorithm>

#include "snap/compiler.hpp"
#include "snap/spudd.hpp"

namespace snap::compiler {

using add::Add;
using spudd::Lexer;

ModelText to_model_text(const CompiledPOMDP& m) {
  ModelText t;
  t.mgr = m.mgr;
  t.name = m.spec.metadata.id.empty() ? "unnamed" : m.spec.metadata.id;
  for (const auto& a : m.actions)
    t.actions.push_back({a.name, a.cost, a.ability ? m.spec.abilities[*a.ability].name : std::string()});
  for (const auto& v : m.task_vars) t.variables.push_back({"task", m.mgr->var(v.cur).name, m.mgr->var(v.cur).values});
  t.variables.push_back({"behaviour", m.mgr->var(m.behaviour_var.cur).name, m.mgr->var(m.behaviour_var.cur).values});
  for (const auto& v : m.ability_vars) t.variables.push_back({"ability", m.mgr->var(v.cur).name, m.mgr->var(v.cur).values});
  for (std::size_t i = 0; i < m.sensor_vars.size(); ++i)
    t.variables.push_back({"observation", m.spec.sensors[i].name, m.mgr->var(m.sensor_vars[i]).values});
  for (const Cpt* c : m.all_cpts()) t.dds.emplace_back(c->name, c->dd);
  t.reward = m.reward;
  t.discount = m.config.discount;
  t.init = m.initial_belief;
  return t;
}

std::string emit_model(const ModelText& m) {
  std::string out = "model " + m.name + "\n";
  out += "actions\n";
  for (const auto& a : m.actions) {
    out += "  (" + a.name + " " + spudd::format_real(a.cost);
    if (!a.ability.empty()) out += " " + a.ability;
    out += ")\n";
  }
  out += "endactions\nvariables\n";
  for (const auto& v : m.variables) {
    out += "  " + v.kind + " (" + v.name;
    for (const auto& x : v.values) out += " " + x;
    out += ")\n";
  }
  out += "endvariables\n";
  for (const auto& [name, dd] : m.dds) out += spudd::emit(dd, name) + "\n";
  out += "reward " + spudd::emit_tree(m.reward) + "\n";
  out += "discount " + spudd::format_real(m.discount) + "\n";
  out += "init " + spudd::emit_tree(m.init) + "\n";
  return out;
}

std::string emit_model(const CompiledPOMDP& model) { return emit_model(to_model_text(model)); }

ModelText parse_model(std::string_view text) {
  Lexer lx(text);
  ModelText m;
  m.mgr = std::make_shared<add::Manager>();
  lx.expect_keyword("model");
  m.name = std::string(lx.expect_word());

  lx.expect_keyword("actions");
  while (lx.peek().kind == Lexer::Kind::lparen) {
    lx.next();
    ModelAction a;
    a.name = std::string(lx.expect_word());
    a.cost = lx.expect_real();
    if (lx.peek().kind == Lexer::Kind::word) a.ability = std::string(lx.expect_word());
    lx.expect(Lexer::Kind::rparen);
    m.actions.push_back(std::move(a));
  }
  lx.expect_keyword("endactions");
  std::vector<std::string> names;
  for (const auto& a : m.actions) names.push_back(a.name);
  try {
    m.mgr->declare("action", names);
  } catch (const add::AddError& e) {
    lx.fail(lx.peek(), e.what());
  }

  lx.expect_keyword("variables");
  while (lx.peek().kind == Lexer::Kind::word && lx.peek().text != "endvariables") {
    auto at = lx.peek();
    ModelVariable v;
    v.kind = std::string(lx.expect_word());
    if (v.kind != "task" && v.kind != "behaviour" && v.kind != "ability" && v.kind != "observation")
      lx.fail(at, "unknown variable kind '" + v.kind + "'");
    lx.expect(Lexer::Kind::lparen);
    v.name = std::string(lx.expect_word());
    while (lx.peek().kind == Lexer::Kind::word) v.values.emplace_back(lx.expect_word());
    lx.expect(Lexer::Kind::rparen);
    try {
      if (v.kind == "observation") m.mgr->declare(add::primed_name(v.name), v.values, add::Slice::primed);
      else m.mgr->declare_pair(v.name, v.values);
    } catch (const add::AddError& e) {
      lx.fail(at, e.what());
    }
    m.variables.push_back(std::move(v));
  }
  lx.expect_keyword("endvariables");

  while (lx.peek().kind == Lexer::Kind::word && lx.peek().text == "dd") {
    lx.next();
    std::string name(lx.expect_word());
    Add dd = lx.tree(m.mgr);
    lx.expect_keyword("enddd");
    m.dds.emplace_back(std::move(name), dd);
  }
  lx.expect_keyword("reward");
  m.reward = lx.tree(m.mgr);
  lx.expect_keyword("discount");
  m.discount = lx.expect_real();
  lx.expect_keyword("init");
  m.init = lx.tree(m.mgr);
  if (!lx.at_end()) lx.fail(lx.peek(), "unexpected text after the model");
  return m;
}

}  // namespace snap::compiler
