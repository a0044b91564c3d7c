#include "snap/flat_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snap/kernels.hpp"

namespace snap::solver {

std::vector<double> FlatModel::transition_row(std::size_t a, std::size_t s) const {
  std::vector<double> e(num_states(), 0.0), out(num_states());
  e[s] = 1.0;
  forward(a, e, out);
  return out;
}

void FlatModel::weight_by_observation(std::size_t a, std::size_t o, std::span<double> x) const {
  const std::size_t bs = block_size();
  for (std::size_t blk = 0, n = x.size() / bs; blk < n; ++blk) {
    double l = block_likelihood(a, o, blk);
    double* p = x.data() + blk * bs;
    if (l == 0.0) std::fill(p, p + bs, 0.0);
    else if (l != 1.0) kernels::scale(l, {p, bs});
  }
}

std::vector<double> FlatModel::observation_column(std::size_t a, std::size_t o) const {
  std::vector<double> x(num_states(), 1.0);
  weight_by_observation(a, o, x);
  return x;
}

// ---------------------------------------------------------------------------

DenseModel::DenseModel(std::vector<std::string> actions, std::vector<std::vector<std::vector<double>>> transition,
                       std::vector<std::vector<std::vector<double>>> observation,
                       std::vector<std::vector<double>> reward, double discount) {
  actions_ = std::move(actions);
  rewards_ = std::move(reward);
  discount_ = discount;
  const std::size_t na = actions_.size();
  if (transition.size() != na || observation.size() != na || rewards_.size() != na)
    throw FlatModelError("dense model: one transition, observation and reward table per action is required");
  n_ = transition[0].size();
  o_ = observation[0].empty() ? 0 : observation[0][0].size();
  for (std::size_t a = 0; a < na; ++a) {
    if (transition[a].size() != n_ || observation[a].size() != n_ || rewards_[a].size() != n_)
      throw FlatModelError("dense model: table sizes disagree");
    std::vector<double> t(n_ * n_), z(n_ * o_);
    for (std::size_t s = 0; s < n_; ++s) {
      if (transition[a][s].size() != n_ || observation[a][s].size() != o_)
        throw FlatModelError("dense model: table sizes disagree");
      auto row_sum = [](const std::vector<double>& r) { return std::accumulate(r.begin(), r.end(), 0.0); };
      if (std::abs(row_sum(transition[a][s]) - 1.0) > 1e-9 || std::abs(row_sum(observation[a][s]) - 1.0) > 1e-9)
        throw FlatModelError("dense model: row " + std::to_string(s) + " of action " + actions_[a] +
                             " does not sum to 1");
      std::copy(transition[a][s].begin(), transition[a][s].end(), t.begin() + s * n_);
      std::copy(observation[a][s].begin(), observation[a][s].end(), z.begin() + s * o_);
    }
    t_.push_back(std::move(t));
    z_.push_back(std::move(z));
  }
}

void DenseModel::forward(std::size_t a, std::span<const double> b, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t s = 0; s < n_; ++s)
    if (b[s] != 0.0) kernels::axpy(b[s], {t_[a].data() + s * n_, n_}, out);
}

void DenseModel::backward(std::size_t a, std::span<const double> v, std::span<double> out) const {
  for (std::size_t s = 0; s < n_; ++s) out[s] = kernels::dot({t_[a].data() + s * n_, n_}, v);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint32_t kYes = 1;

bool all_zero(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] != 0.0) return false;
  return true;
}

}  // namespace

FactoredFlatModel::FactoredFlatModel(const compiler::CompiledPOMDP& m, const FlattenOptions& options)
    : mgr_(m.mgr) {
  layout_.action_var = m.action_var;
  layout_.task_vars = m.task_vars;
  layout_.behaviour_var = m.behaviour_var;
  layout_.ability_vars = m.ability_vars;
  layout_.sensor_vars = m.sensor_vars;

  nAbil_ = m.ability_vars.size();
  if (nAbil_ > options.max_abilities)
    throw FlatModelError("model has " + std::to_string(nAbil_) + " abilities, more than the limit of " +
                         std::to_string(options.max_abilities) + "; split the task or merge abilities");
  nT_ = 1;
  for (const auto& v : m.task_vars) {
    task_arity_.push_back(mgr_->arity(v.cur));
    nT_ *= task_arity_.back();
  }
  nB_ = m.behaviour_count();
  nY_ = std::size_t{1} << nAbil_;
  const std::size_t n = nT_ * nB_ * nY_;
  if (n > options.max_states)
    throw FlatModelError("model has " + std::to_string(n) + " joint states, more than the limit of " +
                         std::to_string(options.max_states) +
                         "; reduce the number of task values, behaviours or abilities");
  nO_ = 1;
  for (auto v : m.sensor_vars) {
    sensor_arity_.push_back(mgr_->arity(v));
    nO_ *= sensor_arity_.back();
  }
  if (nO_ > options.max_observations)
    throw FlatModelError("model has " + std::to_string(nO_) + " joint observations, more than the limit of " +
                         std::to_string(options.max_observations) + "; reduce sensors or readings");

  discount_ = m.config.discount;
  for (const auto& a : m.actions) actions_.push_back(a.name);
  const std::size_t nA = actions_.size();

  add::Assignment x(mgr_->num_vars(), 0);
  auto set_task = [&](std::size_t t, bool primed) {
    for (std::size_t i = task_arity_.size(); i-- > 0;) {
      const auto& v = layout_.task_vars[i];
      x[primed ? v.primed : v.cur] = static_cast<std::uint32_t>(t % task_arity_[i]);
      t /= task_arity_[i];
    }
  };
  auto set_abilities = [&](std::size_t y, bool primed) {
    for (std::size_t k = 0; k < nAbil_; ++k) {
      const auto& v = layout_.ability_vars[k];
      x[primed ? v.primed : v.cur] = has_ability(y, k) ? kYes : 0;
    }
  };

  // Abilities: P(y'|y,a) is the product of the per-ability CPTs.
  bool factored = options.factor_abilities;
  for (std::size_t k = 0; k < nAbil_ && factored; ++k)
    for (auto v : m.ability_cpts[k].dd.support())
      if (v != layout_.action_var && v != layout_.ability_vars[k].cur && v != layout_.ability_vars[k].primed)
        factored = false;
  if (factored) {
    ability_factors_.assign(nA, std::vector<std::array<double, 4>>(nAbil_));
    for (std::size_t a = 0; a < nA; ++a) {
      x[layout_.action_var] = static_cast<std::uint32_t>(a);
      for (std::size_t k = 0; k < nAbil_; ++k)
        for (std::uint32_t v = 0; v < 2; ++v)
          for (std::uint32_t v2 = 0; v2 < 2; ++v2) {
            x[layout_.ability_vars[k].cur] = v;
            x[layout_.ability_vars[k].primed] = v2;
            ability_factors_[a][k][v * 2 + v2] = m.ability_cpts[k].dd.evaluate(x);
          }
    }
  } else {
    if (nAbil_ > 10)
      throw FlatModelError("abilities with cross-ability preconditions are limited to 10 per model");
    ability_.assign(nA, std::vector<double>(nY_ * nY_, 0.0));
    std::vector<double> p_yes(nAbil_), p_no(nAbil_);
    for (std::size_t a = 0; a < nA; ++a) {
      x[layout_.action_var] = static_cast<std::uint32_t>(a);
      for (std::size_t y = 0; y < nY_; ++y) {
        set_abilities(y, false);
        for (std::size_t k = 0; k < nAbil_; ++k) {
          const auto child = layout_.ability_vars[k].primed;
          x[child] = kYes;
          p_yes[k] = m.ability_cpts[k].dd.evaluate(x);
          x[child] = 0;
          p_no[k] = m.ability_cpts[k].dd.evaluate(x);
        }
        double* row = ability_[a].data() + y * nY_;
        for (std::size_t y2 = 0; y2 < nY_; ++y2) {
          double p = 1.0;
          for (std::size_t k = 0; k < nAbil_ && p != 0.0; ++k) p *= has_ability(y2, k) ? p_yes[k] : p_no[k];
          row[y2] = p;
        }
      }
    }
  }

  // Behaviour: [t][b][b'][y'].
  behaviour_.assign(nT_ * nB_ * nB_ * nY_, 0.0);
  for (std::size_t t = 0; t < nT_; ++t) {
    set_task(t, false);
    for (std::size_t b = 0; b < nB_; ++b) {
      x[layout_.behaviour_var.cur] = static_cast<std::uint32_t>(b);
      for (std::size_t b2 = 0; b2 < nB_; ++b2) {
        x[layout_.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
        double* out = behaviour_.data() + ((t * nB_ + b) * nB_ + b2) * nY_;
        for (std::size_t y2 = 0; y2 < nY_; ++y2) {
          set_abilities(y2, true);
          out[y2] = m.behaviour_cpt.dd.evaluate(x);
        }
      }
    }
  }

  // Task: product of the per-variable CPTs, kept sparse.
  task_.assign(nB_ * nT_, {});
  for (std::size_t b2 = 0; b2 < nB_; ++b2) {
    x[layout_.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
    for (std::size_t t = 0; t < nT_; ++t) {
      set_task(t, false);
      auto& row = task_[b2 * nT_ + t];
      for (std::size_t t2 = 0; t2 < nT_; ++t2) {
        set_task(t2, true);
        double p = 1.0;
        for (std::size_t i = 0; i < m.task_cpts.size() && p != 0.0; ++i) p *= m.task_cpts[i].dd.evaluate(x);
        if (p != 0.0) row.emplace_back(static_cast<std::uint32_t>(t2), p);
      }
    }
  }

  // Sensors: [t'][b'][r].
  for (std::size_t k = 0; k < m.sensor_cpts.size(); ++k) {
    const std::size_t r_n = sensor_arity_[k];
    std::vector<double> table(nT_ * nB_ * r_n);
    for (std::size_t t2 = 0; t2 < nT_; ++t2) {
      set_task(t2, true);
      for (std::size_t b2 = 0; b2 < nB_; ++b2) {
        x[layout_.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
        for (std::size_t r = 0; r < r_n; ++r) {
          x[layout_.sensor_vars[k]] = static_cast<std::uint32_t>(r);
          table[(t2 * nB_ + b2) * r_n + r] = m.sensor_cpts[k].dd.evaluate(x);
        }
      }
    }
    sensor_.push_back(std::move(table));
  }

  if (nO_ * nT_ * nB_ <= (std::size_t{1} << 24)) {
    obs_.assign(nO_ * nT_ * nB_, 0.0);
    for (std::size_t o = 0; o < nO_; ++o) {
      auto r = observation_readings(o);
      for (std::size_t blk = 0; blk < nT_ * nB_; ++blk) {
        double l = 1.0;
        for (std::size_t k = 0; k < sensor_.size(); ++k) l *= sensor_[k][blk * sensor_arity_[k] + r[k]];
        obs_[o * nT_ * nB_ + blk] = l;
      }
    }
  }

  // Reward, goal and initial belief.
  std::vector<double> task_reward(nT_);
  goal_.assign(nT_, false);
  for (std::size_t t = 0; t < nT_; ++t) {
    set_task(t, false);
    task_reward[t] = m.reward.evaluate(x);
    goal_[t] = m.goal.evaluate(x) > 0.5;
  }
  rewards_.assign(nA, std::vector<double>(n));
  for (std::size_t a = 0; a < nA; ++a)
    for (std::size_t s = 0; s < n; ++s) rewards_[a][s] = task_reward[s / (nB_ * nY_)] - m.actions[a].cost;

  initial_.assign(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    fill_assignment(s, x, false);
    initial_[s] = m.initial_belief.evaluate(x);
  }
}

FactoredState FactoredFlatModel::decode(std::size_t s) const {
  FactoredState f;
  f.abilities = s % nY_;
  s /= nY_;
  f.behaviour = s % nB_;
  f.task = s / nB_;
  return f;
}

void FactoredFlatModel::fill_assignment(std::size_t s, add::Assignment& x, bool primed) const {
  if (x.size() < mgr_->num_vars()) x.resize(mgr_->num_vars(), 0);
  FactoredState f = decode(s);
  std::size_t t = f.task;
  for (std::size_t i = task_arity_.size(); i-- > 0;) {
    const auto& v = layout_.task_vars[i];
    x[primed ? v.primed : v.cur] = static_cast<std::uint32_t>(t % task_arity_[i]);
    t /= task_arity_[i];
  }
  x[primed ? layout_.behaviour_var.primed : layout_.behaviour_var.cur] = static_cast<std::uint32_t>(f.behaviour);
  for (std::size_t k = 0; k < nAbil_; ++k) {
    const auto& v = layout_.ability_vars[k];
    x[primed ? v.primed : v.cur] = has_ability(f.abilities, k) ? kYes : 0;
  }
}

std::size_t FactoredFlatModel::observation_index(std::span<const std::size_t> readings) const {
  std::size_t o = 0;
  for (std::size_t k = 0; k < sensor_arity_.size(); ++k) o = o * sensor_arity_[k] + readings[k];
  return o;
}

std::vector<std::size_t> FactoredFlatModel::observation_readings(std::size_t o) const {
  std::vector<std::size_t> r(sensor_arity_.size());
  for (std::size_t k = sensor_arity_.size(); k-- > 0;) {
    r[k] = o % sensor_arity_[k];
    o /= sensor_arity_[k];
  }
  return r;
}

double FactoredFlatModel::block_likelihood(std::size_t, std::size_t o, std::size_t block) const {
  if (!obs_.empty()) return obs_[o * nT_ * nB_ + block];
  auto r = observation_readings(o);
  double l = 1.0;
  for (std::size_t k = 0; k < sensor_.size(); ++k) l *= sensor_[k][block * sensor_arity_[k] + r[k]];
  return l;
}

// Ability stage over the whole state vector; blocks that are entirely zero
// stay zero.
void FactoredFlatModel::ability_forward(std::size_t a, const double* in, double* out) const {
  const std::size_t n = num_states();
  if (!ability_factors_.empty()) {
    std::copy(in, in + n, out);
    for (std::size_t k = 0; k < nAbil_; ++k) {
      const auto& f = ability_factors_[a][k];
      const std::size_t stride = std::size_t{1} << (nAbil_ - 1 - k);
      for (std::size_t base = 0; base < n; base += 2 * stride)
        for (std::size_t i = base; i < base + stride; ++i) {
          const double x0 = out[i], x1 = out[i + stride];
          out[i] = x0 * f[0] + x1 * f[2];
          out[i + stride] = x0 * f[1] + x1 * f[3];
        }
    }
    return;
  }
  const auto& k = kernels::active();
  const double* M = ability_[a].data();
  std::fill(out, out + n, 0.0);
  for (std::size_t blk = 0; blk < nT_ * nB_; ++blk)
    for (std::size_t y = 0; y < nY_; ++y)
      if (double p = in[blk * nY_ + y]; p != 0.0) k.axpy(p, M + y * nY_, out + blk * nY_, nY_);
}

void FactoredFlatModel::ability_backward(std::size_t a, const double* in, double* out) const {
  const std::size_t n = num_states();
  if (!ability_factors_.empty()) {
    std::copy(in, in + n, out);
    for (std::size_t k = 0; k < nAbil_; ++k) {
      const auto& f = ability_factors_[a][k];
      const std::size_t stride = std::size_t{1} << (nAbil_ - 1 - k);
      for (std::size_t base = 0; base < n; base += 2 * stride)
        for (std::size_t i = base; i < base + stride; ++i) {
          const double x0 = out[i], x1 = out[i + stride];
          out[i] = f[0] * x0 + f[1] * x1;
          out[i + stride] = f[2] * x0 + f[3] * x1;
        }
    }
    return;
  }
  const auto& k = kernels::active();
  const double* M = ability_[a].data();
  for (std::size_t blk = 0; blk < nT_ * nB_; ++blk) {
    const double* src = in + blk * nY_;
    double* dst = out + blk * nY_;
    if (all_zero(src, nY_)) {
      std::fill(dst, dst + nY_, 0.0);
      continue;
    }
    for (std::size_t y = 0; y < nY_; ++y) dst[y] = k.dot(M + y * nY_, src, nY_);
  }
}

// The behaviour and task stages run block-wise over contiguous ability
// vectors of length nY, skipping (task, behaviour) blocks with no mass.
void FactoredFlatModel::forward(std::size_t a, std::span<const double> b, std::span<double> out) const {
  const std::size_t blocks = nT_ * nB_;
  const auto& k = kernels::active();
  std::vector<double> u(blocks * nY_), w(blocks * nY_, 0.0);
  std::vector<char> live_w(blocks, 0);
  ability_forward(a, b.data(), u.data());

  for (std::size_t t = 0; t < nT_; ++t)
    for (std::size_t bb = 0; bb < nB_; ++bb) {
      const double* src = u.data() + (t * nB_ + bb) * nY_;
      if (all_zero(src, nY_)) continue;
      for (std::size_t b2 = 0; b2 < nB_; ++b2) {
        const double* p = behaviour_.data() + ((t * nB_ + bb) * nB_ + b2) * nY_;
        k.fma3(src, p, w.data() + (t * nB_ + b2) * nY_, nY_);
        live_w[t * nB_ + b2] = 1;
      }
    }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t b2 = 0; b2 < nB_; ++b2)
    for (std::size_t t = 0; t < nT_; ++t) {
      if (!live_w[t * nB_ + b2]) continue;
      const double* src = w.data() + (t * nB_ + b2) * nY_;
      for (auto [t2, p] : task_[b2 * nT_ + t]) k.axpy(p, src, out.data() + (t2 * nB_ + b2) * nY_, nY_);
    }
}

void FactoredFlatModel::backward(std::size_t a, std::span<const double> v, std::span<double> out) const {
  const std::size_t blocks = nT_ * nB_;
  const auto& k = kernels::active();
  std::vector<double> w(blocks * nY_, 0.0), u(blocks * nY_, 0.0);
  std::vector<char> live_v(blocks), live_w(blocks, 0);
  for (std::size_t blk = 0; blk < blocks; ++blk) live_v[blk] = !all_zero(v.data() + blk * nY_, nY_);

  for (std::size_t b2 = 0; b2 < nB_; ++b2)
    for (std::size_t t = 0; t < nT_; ++t) {
      double* dst = w.data() + (t * nB_ + b2) * nY_;
      for (auto [t2, p] : task_[b2 * nT_ + t])
        if (live_v[t2 * nB_ + b2]) {
          k.axpy(p, v.data() + (t2 * nB_ + b2) * nY_, dst, nY_);
          live_w[t * nB_ + b2] = 1;
        }
    }
  for (std::size_t t = 0; t < nT_; ++t)
    for (std::size_t bb = 0; bb < nB_; ++bb) {
      double* dst = u.data() + (t * nB_ + bb) * nY_;
      for (std::size_t b2 = 0; b2 < nB_; ++b2) {
        if (!live_w[t * nB_ + b2]) continue;
        const double* p = behaviour_.data() + ((t * nB_ + bb) * nB_ + b2) * nY_;
        k.fma3(p, w.data() + (t * nB_ + b2) * nY_, dst, nY_);
      }
    }
  ability_backward(a, u.data(), out.data());
}

}  // namespace snap::solver
