#pragma once

// Small hand-built POMDPs and a brute-force reference for two-state models.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "snap/flat_model.hpp"

namespace snap::testing {

// Two states; "go" moves to the absorbing goal (state 1), which pays 1 per step.
inline solver::DenseModel chain_model(double discount = 0.95) {
  return solver::DenseModel({"go"}, {{{0.0, 1.0}, {0.0, 1.0}}}, {{{1.0}, {1.0}}}, {{0.0, 1.0}}, discount);
}

struct TigerParams {
  double listen_cost = 1.0;
  double treasure = 10.0;
  double tiger = -100.0;
  double accuracy = 0.85;
  double discount = 0.95;
  double scale = 1.0;
};

// States: tiger-left, tiger-right. Observations: hear-left, hear-right.
// Opening a door resets the problem.
inline solver::DenseModel tiger_model(const TigerParams& p = {}) {
  const double a = p.accuracy;
  std::vector<std::vector<std::vector<double>>> t = {
      {{1, 0}, {0, 1}}, {{0.5, 0.5}, {0.5, 0.5}}, {{0.5, 0.5}, {0.5, 0.5}}};
  std::vector<std::vector<std::vector<double>>> z = {
      {{a, 1 - a}, {1 - a, a}}, {{0.5, 0.5}, {0.5, 0.5}}, {{0.5, 0.5}, {0.5, 0.5}}};
  const double k = p.scale;
  std::vector<std::vector<double>> r = {{-p.listen_cost * k, -p.listen_cost * k},
                                        {p.tiger * k, p.treasure * k},
                                        {p.treasure * k, p.tiger * k}};
  return solver::DenseModel({"listen", "open_left", "open_right"}, t, z, r, p.discount);
}

// Point-based value iteration over a uniform grid of the belief simplex of a
// two-state model, with full backups at every grid point until the values stop
// moving. Returns the value at belief (1-q, q) for each q in `at`.
inline std::vector<double> grid_reference(const solver::FlatModel& m, const std::vector<double>& at,
                                          std::size_t points = 2001, int max_iterations = 5000) {
  using Vec = std::array<double, 2>;
  const std::size_t na = m.num_actions(), no = m.num_observations();
  std::vector<std::vector<std::vector<double>>> tr(na, std::vector<std::vector<double>>(2));
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t s = 0; s < 2; ++s) tr[a][s] = m.transition_row(a, s);
  std::vector<std::vector<double>> z(na * no);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t o = 0; o < no; ++o) z[a * no + o] = m.observation_column(a, o);

  double rmin = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < na; ++a)
    for (double r : m.reward(a)) rmin = std::min(rmin, r);
  std::vector<Vec> gamma = {{rmin / (1 - m.discount()), rmin / (1 - m.discount())}};

  auto value = [&](const std::vector<Vec>& g, double q) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : g) best = std::max(best, (1 - q) * v[0] + q * v[1]);
    return best;
  };
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(points - 1);

  for (int it = 0; it < max_iterations; ++it) {
    // g[a][o][k](s) = sum_s' T(s,a,s') Z(s',a,o) gamma_k(s')
    std::vector<std::vector<std::vector<Vec>>> g(na, std::vector<std::vector<Vec>>(no));
    for (std::size_t a = 0; a < na; ++a)
      for (std::size_t o = 0; o < no; ++o)
        for (const auto& v : gamma) {
          Vec x{};
          for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t s2 = 0; s2 < 2; ++s2) x[s] += tr[a][s][s2] * z[a * no + o][s2] * v[s2];
          g[a][o].push_back(x);
        }
    std::vector<Vec> next;
    for (double q : grid) {
      Vec best{};
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < na; ++a) {
        Vec acc{m.reward(a)[0], m.reward(a)[1]};
        for (std::size_t o = 0; o < no; ++o) {
          const Vec* arg = nullptr;
          double bv = -std::numeric_limits<double>::infinity();
          for (const auto& x : g[a][o]) {
            double v = (1 - q) * x[0] + q * x[1];
            if (v > bv) bv = v, arg = &x;
          }
          acc[0] += m.discount() * (*arg)[0];
          acc[1] += m.discount() * (*arg)[1];
        }
        double v = (1 - q) * acc[0] + q * acc[1];
        if (v > best_v) best_v = v, best = acc;
      }
      next.push_back(best);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    double change = 0.0;
    for (double q : grid) change = std::max(change, std::abs(value(next, q) - value(gamma, q)));
    gamma = std::move(next);
    if (change < 1e-12) break;
  }
  std::vector<double> out;
  for (double q : at) out.push_back(value(gamma, q));
  return out;
}

}  // namespace snap::testing
