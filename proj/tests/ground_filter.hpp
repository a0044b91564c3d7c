#pragma once

// Forward filtering on the ground state space, computed from the compiled
// CPTs by direct enumeration of every (s, s') pair with nonzero weight.
//
// Flat index: ((t * nB) + b) * nY + y, first ability in the most significant
// bit of y.

#include <cmath>
#include <numeric>
#include <vector>

#include "snap/compiler.hpp"

namespace snap::testing {

class GroundFilter {
 public:
  explicit GroundFilter(const compiler::CompiledPOMDP& m) : m_(m) {
    nT_ = task::task_state_count(m.spec);
    nB_ = m.behaviour_count();
    nA_ = m.ability_vars.size();
    nY_ = std::size_t{1} << nA_;
    nAct_ = m.actions.size();
    add::Assignment x(m.mgr->num_vars(), 0);

    ability_.assign(nAct_ * nY_ * nY_, 1.0);
    for (std::size_t a = 0; a < nAct_; ++a)
      for (std::size_t y = 0; y < nY_; ++y)
        for (std::size_t y2 = 0; y2 < nY_; ++y2) {
          x[m.action_var] = static_cast<std::uint32_t>(a);
          set_abilities(x, y, false);
          set_abilities(x, y2, true);
          double p = 1.0;
          for (const auto& c : m.ability_cpts) p *= c.dd.evaluate(x);
          ability_[(a * nY_ + y) * nY_ + y2] = p;
        }

    behaviour_.assign(nT_ * nB_ * nY_ * nB_, 0.0);
    for (std::size_t t = 0; t < nT_; ++t)
      for (std::size_t b = 0; b < nB_; ++b)
        for (std::size_t y2 = 0; y2 < nY_; ++y2)
          for (std::size_t b2 = 0; b2 < nB_; ++b2) {
            set_task(x, t, false);
            x[m.behaviour_var.cur] = static_cast<std::uint32_t>(b);
            set_abilities(x, y2, true);
            x[m.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
            behaviour_[((t * nB_ + b) * nY_ + y2) * nB_ + b2] = m.behaviour_cpt.dd.evaluate(x);
          }

    task_.assign(nT_ * nB_ * nT_, 0.0);
    for (std::size_t t = 0; t < nT_; ++t)
      for (std::size_t b2 = 0; b2 < nB_; ++b2)
        for (std::size_t t2 = 0; t2 < nT_; ++t2) {
          set_task(x, t, false);
          set_task(x, t2, true);
          x[m.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
          double p = 1.0;
          for (const auto& c : m.task_cpts) p *= c.dd.evaluate(x);
          task_[(t * nB_ + b2) * nT_ + t2] = p;
        }
  }

  std::size_t num_states() const { return nT_ * nB_ * nY_; }

  // P(readings | t', b') as a product of sensor CPT lookups.
  double likelihood(std::size_t t2, std::size_t b2, const std::vector<std::size_t>& readings) const {
    add::Assignment x(m_.mgr->num_vars(), 0);
    set_task(x, t2, true);
    x[m_.behaviour_var.primed] = static_cast<std::uint32_t>(b2);
    double p = 1.0;
    for (std::size_t k = 0; k < readings.size(); ++k) {
      x[m_.sensor_vars[k]] = static_cast<std::uint32_t>(readings[k]);
      p *= m_.sensor_cpts[k].dd.evaluate(x);
    }
    return p;
  }

  std::vector<double> step(const std::vector<double>& b, std::size_t a, const std::vector<std::size_t>& readings) const {
    std::vector<double> out(num_states(), 0.0);
    for (std::size_t t = 0; t < nT_; ++t)
      for (std::size_t bb = 0; bb < nB_; ++bb)
        for (std::size_t y = 0; y < nY_; ++y) {
          double w = b[(t * nB_ + bb) * nY_ + y];
          if (w == 0.0) continue;
          for (std::size_t y2 = 0; y2 < nY_; ++y2) {
            double py = ability_[(a * nY_ + y) * nY_ + y2];
            if (py == 0.0) continue;
            for (std::size_t b2 = 0; b2 < nB_; ++b2) {
              double pb = behaviour_[((t * nB_ + bb) * nY_ + y2) * nB_ + b2];
              if (pb == 0.0) continue;
              for (std::size_t t2 = 0; t2 < nT_; ++t2) {
                double pt = task_[(t * nB_ + b2) * nT_ + t2];
                if (pt != 0.0) out[(t2 * nB_ + b2) * nY_ + y2] += w * py * pb * pt;
              }
            }
          }
        }
    for (std::size_t t2 = 0; t2 < nT_; ++t2)
      for (std::size_t b2 = 0; b2 < nB_; ++b2) {
        double l = likelihood(t2, b2, readings);
        for (std::size_t y2 = 0; y2 < nY_; ++y2) out[(t2 * nB_ + b2) * nY_ + y2] *= l;
      }
    double z = std::accumulate(out.begin(), out.end(), 0.0);
    for (auto& v : out) v /= z;
    return out;
  }

 private:
  void set_task(add::Assignment& x, std::size_t t, bool primed) const {
    auto ts = task::decode(m_.spec, t);
    for (std::size_t i = 0; i < ts.size(); ++i) x[primed ? m_.task_vars[i].primed : m_.task_vars[i].cur] = ts[i];
  }
  void set_abilities(add::Assignment& x, std::size_t y, bool primed) const {
    for (std::size_t k = 0; k < nA_; ++k)
      x[primed ? m_.ability_vars[k].primed : m_.ability_vars[k].cur] = (y >> (nA_ - 1 - k)) & 1u;
  }

  const compiler::CompiledPOMDP& m_;
  std::size_t nT_, nB_, nA_, nY_, nAct_;
  std::vector<double> ability_;    // [a][y][y']
  std::vector<double> behaviour_;  // [t][b][y'][b']
  std::vector<double> task_;       // [t][b'][t']
};

}  // namespace snap::testing
