#pragma once

// The designer-authored task specification: task variables, client abilities,
// behaviours with their effects, IU rows, sensors, rewards and model
// constants, plus its JSON file format and a revisioned file store.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snap/diagnostic.hpp"

namespace snap::task {

// Variable name -> allowed values. A single value is the usual case; a list
// stands for the disjunction of its members.
using PartialState = std::map<std::string, std::vector<std::string>>;

// One value index per task variable, in declaration order.
using TaskState = std::vector<std::uint32_t>;

inline constexpr std::string_view kNothing = "nothing";
inline constexpr std::string_view kOther = "other";
inline constexpr std::string_view kDoNothing = "donothing";
inline constexpr std::string_view kBehaviourVar = "behaviour";
inline constexpr std::string_view kActionVar = "action";
inline constexpr std::string_view kPromptPrefix = "prompt_";

struct TaskVariableSpec {
  std::string name;
  std::vector<std::string> values;
  std::string initial_value;
};

enum class AbilityKind { recall, recognition, affordance };

struct DynProb {
  double keep_prompt = 1.0;
  double gain_prompt = 0.0;
  double keep = 1.0;
  double gain = 0.0;
};

struct AbilitySpec {
  std::string name;
  AbilityKind kind = AbilityKind::recall;
  DynProb dyn_prob;
  double prompt_cost = 0.0;
  double prior = 0.8;
  std::vector<std::string> precondition_abilities;
};

struct Clause {
  PartialState preconditions;
  PartialState effects;  // single value per variable
};

struct BehaviourSpec {
  std::string name;
  std::vector<Clause> clauses;
};

struct IURow {
  int index = 0;
  std::vector<std::string> goals;
  PartialState relevant_state;
  std::vector<std::string> required_abilities;
  std::string behaviour;
  std::optional<double> probability;
};

struct SensorSpec {
  std::string name;
  // A task variable, the behaviour variable ("behaviour"), or one declared
  // behaviour (then the target values are "no"/"yes").
  std::string target;
  std::vector<std::string> readings;
  // noise[i][j] = P(reading j | i-th target value).
  std::vector<std::vector<double>> noise;
};

struct RewardEntry {
  PartialState state_set;
  double value = 0.0;
  bool is_goal = false;
};

struct ModelConfig {
  double rho = 0.01;
  double kappa = 1.0;
  double other_noise = 0.05;
  double discount = 0.95;
  std::optional<int> horizon;  // unset = unbounded

  bool operator==(const ModelConfig&) const = default;
};

struct Metadata {
  std::string id;
  std::string title;
  int revision = 0;
};

struct SpecDocument {
  Metadata metadata;
  std::vector<TaskVariableSpec> variables;
  std::vector<AbilitySpec> abilities;
  std::vector<BehaviourSpec> behaviours;
  std::vector<IURow> iu_rows;
  std::vector<SensorSpec> sensors;
  std::vector<RewardEntry> rewards;
  ModelConfig config;

  const TaskVariableSpec* find_variable(std::string_view name) const;
  const AbilitySpec* find_ability(std::string_view name) const;
  const BehaviourSpec* find_behaviour(std::string_view name) const;
  std::optional<std::size_t> variable_index(std::string_view name) const;
  std::optional<std::size_t> ability_index(std::string_view name) const;
  std::optional<std::size_t> behaviour_index(std::string_view name) const;
  std::size_t value_index(std::size_t var, std::string_view value) const;

  // Values of the target of a sensor, in the order its noise rows use.
  std::vector<std::string> sensor_target_values(const SensorSpec& s) const;
  // Declared behaviours followed by nothing and other.
  std::vector<std::string> behaviour_values() const;
};

struct LoadResult {
  std::optional<SpecDocument> spec;
  Diagnostics diagnostics;
  bool ok() const { return spec.has_value(); }
};

// Never throws on malformed input; errors become diagnostics and leave
// `spec` empty. Warnings alone do not.
LoadResult load_spec(std::string_view text);
LoadResult load_spec_file(const std::filesystem::path& path);
std::string save_spec(const SpecDocument& spec);

// Reference, range and name-space checks shared by loading and validation.
Diagnostics structural_diagnostics(const SpecDocument& spec);

std::string_view kind_name(AbilityKind k);
std::optional<AbilityKind> parse_kind(std::string_view s);

// ---------------------------------------------------------------------------
// Task-state enumeration. Full states are ordered mixed radix over the
// variables in declaration order, last variable fastest.

std::size_t task_state_count(const SpecDocument& spec);
std::size_t encode(const SpecDocument& spec, const TaskState& s);
TaskState decode(const SpecDocument& spec, std::size_t index);
TaskState initial_state(const SpecDocument& spec);
bool matches(const SpecDocument& spec, const PartialState& p, const TaskState& s);
std::vector<TaskState> enumerate_states(const SpecDocument& spec, const PartialState& partial);
std::string describe(const PartialState& p);

// Goal predicate over full task states: entries flagged is_goal, or the
// entries with maximal value when none is flagged.
std::vector<bool> goal_mask(const SpecDocument& spec);

// ---------------------------------------------------------------------------

class StoreError : public std::runtime_error {
 public:
  enum class Kind { not_found, conflict, invalid, io };
  StoreError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// One canonical JSON file per spec id. Writes to one id are serialized.
class SpecStore {
 public:
  explicit SpecStore(std::filesystem::path dir);

  // Assigns revision 1. Fails with conflict if the id exists.
  SpecDocument create(SpecDocument doc);
  SpecDocument read(const std::string& id) const;
  std::string read_text(const std::string& id) const;
  // doc.metadata.revision must equal the stored revision; the saved copy
  // gets revision + 1.
  SpecDocument update(SpecDocument doc);
  void remove(const std::string& id);
  std::vector<std::string> list() const;

 private:
  std::filesystem::path file_for(const std::string& id) const;
  std::mutex& lock_for(const std::string& id);

  std::filesystem::path dir_;
  mutable std::mutex map_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
  int next_auto_id_ = 1;
};

}  // namespace snap::task
