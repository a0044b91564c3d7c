#pragma once

// Grounds a validated task specification into a factored two-slice POMDP.
//
// Variable order in the decision-diagram manager: `action`, then each task
// variable followed by its primed copy, then `behaviour`/`behaviour'`, then
// each ability and its primed copy, then the primed sensor variables.

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snap/add.hpp"
#include "snap/diagnostic.hpp"
#include "snap/task_model.hpp"

namespace snap::compiler {

class CompileError : public std::runtime_error {
 public:
  CompileError(Diagnostics ds);
  const Diagnostics& diagnostics() const { return ds_; }

 private:
  Diagnostics ds_;
};

struct Action {
  std::string name;
  std::optional<std::size_t> ability;  // prompted ability; none for donothing
  double cost = 0.0;
};

struct VarPair {
  add::VarId cur, primed;
};

struct Cpt {
  std::string name;   // child variable name (primed)
  add::VarId child = 0;
  add::Add dd;        // over parents and child
};

struct CompiledPOMDP {
  std::shared_ptr<add::Manager> mgr;
  task::SpecDocument spec;  // the expanded spec the model was built from
  task::ModelConfig config;

  std::vector<Action> actions;  // donothing first, then one prompt per ability
  add::VarId action_var = 0;
  std::vector<VarPair> task_vars;
  VarPair behaviour_var{};
  std::vector<VarPair> ability_vars;
  std::vector<add::VarId> sensor_vars;  // primed only

  std::vector<Cpt> ability_cpts;  // one per ability, over (A, Y, y')
  Cpt behaviour_cpt;              // over (T, B, Y', B')
  std::vector<Cpt> task_cpts;     // one per task variable, over (T, B', t')
  std::vector<Cpt> sensor_cpts;   // over (target', sensor')
  add::Add reward;                // over T; action costs are separate
  add::Add goal;                  // 0/1 indicator over T
  add::Add initial_belief;        // over current T, B, Y

  std::size_t behaviour_count() const { return mgr->arity(behaviour_var.cur); }
  std::size_t flat_state_count() const;
  std::size_t observation_count() const;
  std::vector<const Cpt*> all_cpts() const;
  std::size_t action_index(std::string_view name) const;  // throws if unknown
};

// Individual CPT builders; `mgr` must hold the model's variables (see
// declare_variables).
struct Layout {
  add::VarId action_var;
  std::vector<VarPair> task_vars;
  VarPair behaviour_var;
  std::vector<VarPair> ability_vars;
  std::vector<add::VarId> sensor_vars;
};
Layout declare_variables(add::Manager& mgr, const task::SpecDocument& spec);
std::vector<Action> derive_actions(const task::SpecDocument& spec);

add::Add compile_ability_cpt(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                             const task::SpecDocument& spec, std::size_t ability,
                             const std::vector<Action>& actions);
add::Add compile_behaviour_cpt(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                               const task::SpecDocument& spec, const task::ModelConfig& config);
add::Add compile_task_cpt(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                          const task::SpecDocument& spec, std::size_t variable, const task::ModelConfig& config);
add::Add compile_sensor_cpt(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                            const task::SpecDocument& spec, std::size_t sensor);
add::Add compile_reward(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                        const task::SpecDocument& spec);
add::Add goal_indicator(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                        const task::SpecDocument& spec);
// Indicator over current task variables of a partial state.
add::Add partial_indicator(const std::shared_ptr<add::Manager>& mgr, const Layout& layout,
                           const task::SpecDocument& spec, const task::PartialState& p);

// Requires the spec to pass validation with its rows already expanded.
// `config` overrides spec.config when given.
CompiledPOMDP compile(const task::SpecDocument& spec, std::optional<task::ModelConfig> config = std::nullopt);

// Largest |sum over child - 1| across all contexts of a CPT.
double normalization_error(const Cpt& cpt);

// ---------------------------------------------------------------------------
// Model container text.

struct ModelVariable {
  std::string kind;  // task | behaviour | ability | observation
  std::string name;
  std::vector<std::string> values;
};

struct ModelAction {
  std::string name;
  double cost = 0.0;
  std::string ability;  // empty for donothing
};

struct ModelText {
  std::string name;
  std::vector<ModelAction> actions;
  std::vector<ModelVariable> variables;
  std::vector<std::pair<std::string, add::Add>> dds;
  add::Add reward;
  double discount = 0.95;
  add::Add init;
  std::shared_ptr<add::Manager> mgr;
};

ModelText to_model_text(const CompiledPOMDP& model);
std::string emit_model(const ModelText& m);
std::string emit_model(const CompiledPOMDP& model);
// Throws spudd::ParseError.
ModelText parse_model(std::string_view text);

}  // namespace snap::compiler
