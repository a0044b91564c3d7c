#pragma once

// Ground (enumerated-state) POMDPs.
//
// FlatModel is the interface the solvers and the simulator work against.
// DenseModel stores explicit matrices and is meant for small hand-built
// models. FactoredFlatModel is produced from a CompiledPOMDP and keeps the
// transition in three stages (abilities, behaviour, task) so a transition
// costs far less than a dense matrix-vector product.
//
// Factored state index: ((t * nB) + b) * nY + y, where t is the task-state
// index (task::encode), b the behaviour value index and y the ability bits
// with the first ability most significant.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snap/compiler.hpp"

namespace snap::solver {

class FlatModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FlatModel {
 public:
  virtual ~FlatModel() = default;

  virtual std::size_t num_states() const = 0;
  virtual std::size_t num_observations() const = 0;
  std::size_t num_actions() const { return actions_.size(); }
  const std::vector<std::string>& action_names() const { return actions_; }
  double discount() const { return discount_; }

  // out[s'] = sum_s b[s] P(s'|s,a)
  virtual void forward(std::size_t a, std::span<const double> b, std::span<double> out) const = 0;
  // out[s] = sum_s' P(s'|s,a) v[s']
  virtual void backward(std::size_t a, std::span<const double> v, std::span<double> out) const = 0;
  // States come in consecutive blocks of block_size() that share their
  // observation likelihoods.
  virtual std::size_t block_size() const { return 1; }
  // P(o | s' in block, a)
  virtual double block_likelihood(std::size_t a, std::size_t o, std::size_t block) const = 0;
  // x[s'] *= P(o|s',a)
  void weight_by_observation(std::size_t a, std::size_t o, std::span<double> x) const;
  // R(s,a), already net of the action cost.
  const std::vector<double>& reward(std::size_t a) const { return rewards_[a]; }

  std::vector<double> transition_row(std::size_t a, std::size_t s) const;
  std::vector<double> observation_column(std::size_t a, std::size_t o) const;

 protected:
  std::vector<std::string> actions_;
  std::vector<std::vector<double>> rewards_;
  double discount_ = 0.95;
};

class DenseModel : public FlatModel {
 public:
  // transition[a][s][s'], observation[a][s'][o], reward[a][s].
  DenseModel(std::vector<std::string> actions, std::vector<std::vector<std::vector<double>>> transition,
             std::vector<std::vector<std::vector<double>>> observation, std::vector<std::vector<double>> reward,
             double discount);

  std::size_t num_states() const override { return n_; }
  std::size_t num_observations() const override { return o_; }
  void forward(std::size_t a, std::span<const double> b, std::span<double> out) const override;
  void backward(std::size_t a, std::span<const double> v, std::span<double> out) const override;
  double block_likelihood(std::size_t a, std::size_t o, std::size_t s) const override { return z_[a][s * o_ + o]; }

 private:
  std::size_t n_ = 0, o_ = 0;
  std::vector<std::vector<double>> t_;  // per action, row-major n x n
  std::vector<std::vector<double>> z_;  // per action, row-major n x o
};

struct FlattenOptions {
  std::size_t max_states = 200000;
  std::size_t max_observations = 10000;
  std::size_t max_abilities = 12;
  // Apply the ability stage one ability at a time when every ability CPT
  // depends only on the action and the ability itself.
  bool factor_abilities = true;
};

struct FactoredState {
  std::size_t task = 0;
  std::size_t behaviour = 0;
  std::size_t abilities = 0;
};

class FactoredFlatModel : public FlatModel {
 public:
  FactoredFlatModel(const compiler::CompiledPOMDP& model, const FlattenOptions& options = {});

  std::size_t num_states() const override { return nT_ * nB_ * nY_; }
  std::size_t num_observations() const override { return nO_; }
  void forward(std::size_t a, std::span<const double> b, std::span<double> out) const override;
  void backward(std::size_t a, std::span<const double> v, std::span<double> out) const override;
  std::size_t block_size() const override { return nY_; }
  double block_likelihood(std::size_t a, std::size_t o, std::size_t block) const override;

  std::size_t task_states() const { return nT_; }
  std::size_t behaviours() const { return nB_; }
  std::size_t ability_states() const { return nY_; }
  std::size_t num_abilities() const { return nAbil_; }

  std::size_t index(const FactoredState& s) const { return (s.task * nB_ + s.behaviour) * nY_ + s.abilities; }
  FactoredState decode(std::size_t s) const;
  bool has_ability(std::size_t ability_bits, std::size_t k) const { return (ability_bits >> (nAbil_ - 1 - k)) & 1u; }
  // Joint observation index from per-sensor reading indices (last sensor fastest).
  std::size_t observation_index(std::span<const std::size_t> readings) const;
  std::vector<std::size_t> observation_readings(std::size_t o) const;
  const std::vector<std::size_t>& sensor_arity() const { return sensor_arity_; }
  // P(reading r of sensor k | task state t', behaviour b').
  double sensor_likelihood(std::size_t k, std::size_t r, std::size_t t, std::size_t b) const {
    return sensor_[k][(t * nB_ + b) * sensor_arity_[k] + r];
  }

  // P(b' | t, b, y')
  double behaviour_probability(std::size_t t, std::size_t b, std::size_t b2, std::size_t y2) const {
    return behaviour_[((t * nB_ + b) * nB_ + b2) * nY_ + y2];
  }
  // Nonzero P(t' | t, b') as (t', p).
  const std::vector<std::pair<std::uint32_t, double>>& task_successors(std::size_t b2, std::size_t t) const {
    return task_[b2 * nT_ + t];
  }

  // Distribution over flat states of the model's initial belief.
  std::vector<double> initial_belief() const { return initial_; }
  const std::vector<bool>& goal_task_states() const { return goal_; }
  // Full ADD assignment (current slice) for a flat state.
  void fill_assignment(std::size_t s, add::Assignment& x, bool primed) const;

 private:
  std::shared_ptr<add::Manager> mgr_;
  compiler::Layout layout_;
  std::size_t nT_ = 0, nB_ = 0, nY_ = 0, nAbil_ = 0, nO_ = 0;
  std::vector<std::size_t> task_arity_;
  std::vector<std::size_t> sensor_arity_;
  void ability_forward(std::size_t a, const double* in, double* out) const;
  void ability_backward(std::size_t a, const double* in, double* out) const;

  std::vector<std::vector<double>> ability_;  // per action, nY x nY: P(y'|y,a)
  // Per action, per ability: P(y'_k | y_k, a) as {00, 01, 10, 11}; empty
  // when the abilities do not factor.
  std::vector<std::vector<std::array<double, 4>>> ability_factors_;
  std::vector<double> behaviour_;             // [t][b][b'][y']
  std::vector<std::vector<double>> sensor_;   // per sensor, [t'][b'][r]
  std::vector<double> obs_;                   // [o][t'][b'] when small enough
  std::vector<double> initial_;
  std::vector<bool> goal_;
  // Nonzero entries of the task stage, per (b', t): (t', p).
  std::vector<std::vector<std::pair<std::uint32_t, double>>> task_;
};

}  // namespace snap::solver
