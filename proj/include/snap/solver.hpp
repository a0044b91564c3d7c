#pragma once

// Policies over flat models: QMDP and point-based value iteration.
//
// A Policy is a set of alpha vectors, each labelled with an action. The value
// of action a at belief b is the best b.alpha over the vectors labelled a.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "snap/flat_model.hpp"

namespace snap::solver {

enum class PolicyKind { qmdp, pbvi };

std::string_view kind_name(PolicyKind k);

struct AlphaVector {
  std::size_t action = 0;
  std::vector<double> values;
};

struct SolverStats {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  double seconds = 0.0;
};

struct Policy {
  PolicyKind kind = PolicyKind::qmdp;
  std::vector<std::string> actions;
  double discount = 0.95;
  std::vector<AlphaVector> alphas;
  std::vector<std::vector<double>> beliefs;  // pbvi only
  SolverStats stats;

  std::size_t num_states() const { return alphas.empty() ? 0 : alphas.front().values.size(); }
};

class SolveCancelled : public std::runtime_error {
 public:
  SolveCancelled() : std::runtime_error("solve cancelled") {}
};

struct QmdpOptions {
  double tolerance = 1e-6;
  int max_iterations = 100000;
  // Finite horizon: exactly this many backups from zero.
  std::optional<int> horizon;
  // Polled once per iteration; returning true throws SolveCancelled.
  std::function<bool()> cancelled;
};

// Value iteration on the underlying MDP, started from an upper bound so every
// iterate is an upper bound too.
Policy solve_qmdp(const FlatModel& model, const QmdpOptions& options = {});

struct PbviOptions {
  std::size_t belief_count = 256;
  std::size_t trajectory_length = 30;
  double tolerance = 1e-4;
  int max_iterations = 500;
  double time_limit_seconds = 0.0;  // 0 = none
  // Finite horizon: this many backups from a zero vector, no tolerance stop.
  std::optional<int> horizon;
  std::uint64_t seed = 1;
  // After the last iteration, back up every action at every belief point so
  // each action has its own vectors.
  bool per_action_vectors = true;
  // Called after each iteration with the value at every belief point.
  std::function<void(int, const std::vector<double>&)> on_iteration;
  // Polled between backups; returning true throws SolveCancelled.
  std::function<bool()> cancelled;
};

// Beliefs reached from `initial` by uniformly random actions, with states and
// observations sampled from the model. Duplicates are dropped.
std::vector<std::vector<double>> sample_beliefs(const FlatModel& model, std::span<const double> initial,
                                                std::size_t count, std::size_t trajectory_length,
                                                std::uint64_t seed);

// Perseus-style randomized point-based backups, started from blind-policy
// lower bounds.
Policy solve_pbvi(const FlatModel& model, std::vector<std::vector<double>> beliefs,
                  const PbviOptions& options = {});

// One point-based backup at `belief` against `alphas`; returns the best vector
// for each action.
std::vector<AlphaVector> backup(const FlatModel& model, std::span<const AlphaVector> alphas,
                                std::span<const double> belief);

struct ActionValue {
  std::string action;
  double value = 0.0;
};

// Actions without vectors get -infinity.
std::vector<ActionValue> action_values(const Policy& policy, std::span<const double> belief);
double value(const Policy& policy, std::span<const double> belief);
// Highest value; ties go to the lexicographically smallest action name.
std::size_t best_action(const Policy& policy, std::span<const double> belief);
std::size_t best_action(const std::vector<ActionValue>& values);

// Two columns, action and value, like a designer's action-value table.
std::string format_action_values(const std::vector<ActionValue>& values);

class PolicyFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header lines (kind, discount, stats, actions) then one `alpha <action> v...`
// line per vector.
std::string save_policy(const Policy& policy);
Policy load_policy(std::string_view text);

}  // namespace snap::solver
