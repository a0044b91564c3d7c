#pragma once

// Belief tracking on a compiled model, scripted clients, and episodes.

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "snap/compiler.hpp"
#include "snap/flat_model.hpp"
#include "snap/solver.hpp"

namespace snap::sim {

class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::string code, std::string message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// A compiled model with its flat form and policy, shared by sessions.
struct Engine {
  std::shared_ptr<const compiler::CompiledPOMDP> model;
  std::shared_ptr<const solver::FactoredFlatModel> flat;
  std::shared_ptr<const solver::Policy> policy;
};

Engine make_engine(compiler::CompiledPOMDP model, const solver::FlattenOptions& options = {});

struct VariableMarginal {
  std::string kind;  // task | behaviour | ability
  std::string name;
  std::vector<std::string> values;
  std::vector<double> probabilities;
};

struct StepRecord {
  int index = 0;
  std::optional<std::string> action;  // the action that led here; none at step 0
  std::map<std::string, std::string> observation;  // sensor -> reading; empty at step 0
  std::vector<VariableMarginal> marginals;
  std::vector<solver::ActionValue> action_values;
  std::string recommended;
  double goal_probability = 0.0;
  std::optional<std::size_t> true_state;
};

class Session {
 public:
  explicit Session(Engine engine);
  // Starts from `initial` instead of the model's initial belief.
  Session(Engine engine, std::vector<double> initial);

  // Readings keyed by sensor name; every sensor needs one.
  const StepRecord& step(std::string_view action, const std::map<std::string, std::string>& readings);
  const StepRecord& step(std::size_t action, const std::vector<std::size_t>& readings);

  const std::vector<double>& belief() const { return belief_; }
  const std::vector<StepRecord>& trace() const { return trace_; }
  const StepRecord& last() const { return trace_.back(); }
  const Engine& engine() const { return engine_; }
  double goal_probability() const;
  std::vector<VariableMarginal> marginals() const;
  void set_true_state(std::size_t s) { trace_.back().true_state = s; }

 private:
  void record(std::optional<std::string> action, std::map<std::string, std::string> observation);

  Engine engine_;
  std::vector<double> belief_;
  std::vector<StepRecord> trace_;
};

// The model's initial belief with some ability priors replaced. Throws
// SimulationError(unknown_ability | invalid_prior).
std::vector<double> initial_belief(const Engine& engine, const std::map<std::string, double>& ability_priors);

struct ClientProfile {
  std::string name;
  std::vector<double> ability_loss;       // per ability, per step
  std::vector<double> prompt_compliance;  // per ability
  std::vector<bool> initial_abilities;
};

// Starts with no abilities, loses each one after every step, and always
// responds to the matching prompt.
ClientProfile forgetful_compliant(const task::SpecDocument& spec);
// Starts with every ability and never loses one.
ClientProfile fully_able(const task::SpecDocument& spec);

struct ClientStep {
  std::size_t state = 0;               // flat state after the step
  std::vector<std::size_t> readings;   // one per sensor
};

// Abilities follow the profile rather than the model; behaviour, task and
// sensor readings are sampled from the compiled CPTs.
ClientStep scripted_client_step(const solver::FactoredFlatModel& flat, const compiler::CompiledPOMDP& model,
                                const ClientProfile& profile, std::size_t true_state, std::size_t action,
                                std::mt19937_64& rng);

struct Episode {
  std::vector<StepRecord> trace;
  bool reached_goal = false;
  std::vector<std::string> prompts;  // prompted ability names in order
};

Episode run_episode(const Engine& engine, const ClientProfile& profile, int max_steps, std::uint64_t seed,
                    double goal_threshold = 0.9);

// One row per step: index, readings, every marginal, recommended action.
std::string trace_table(const std::vector<StepRecord>& trace);
std::string trace_json(const std::vector<StepRecord>& trace);
nlohmann::json to_json(const StepRecord& r);

}  // namespace snap::sim
