#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "snap/solver.hpp"
#include "snap/validator.hpp"
#include "support.hpp"
#include "toy_models.hpp"

using namespace snap;
using snap::testing::chain_model;
using snap::testing::load_fixture;
using snap::testing::tiger_model;

namespace {

std::vector<double> random_belief(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> b(n);
  for (auto& v : b) v = e(rng);
  double s = std::accumulate(b.begin(), b.end(), 0.0);
  for (auto& v : b) v /= s;
  return b;
}

std::vector<double> two(double q) { return {1 - q, q}; }

solver::Policy tiger_pbvi(const solver::FlatModel& m, std::uint64_t seed = 1, std::size_t count = 200) {
  std::vector<double> init{0.5, 0.5};
  auto beliefs = solver::sample_beliefs(m, init, count, 30, seed);
  solver::PbviOptions o;
  o.tolerance = 1e-7;
  o.max_iterations = 2000;
  o.seed = seed;
  return solver::solve_pbvi(m, beliefs, o);
}

struct Handwashing {
  compiler::CompiledPOMDP model;
  std::unique_ptr<solver::FactoredFlatModel> flat;
};

Handwashing handwashing(const std::function<void(task::SpecDocument&)>& edit = {}) {
  auto spec = validator::validate(load_fixture("handwashing.json")).expanded;
  if (edit) edit(spec);
  Handwashing h{compiler::compile(spec), nullptr};
  h.flat = std::make_unique<solver::FactoredFlatModel>(h.model);
  return h;
}

}  // namespace

TEST_CASE("chain fixpoint") {
  auto m = chain_model();
  solver::QmdpOptions o;
  o.tolerance = 1e-10;
  auto p = solver::solve_qmdp(m, o);
  CHECK(p.stats.converged);
  REQUIRE(p.alphas.size() == 1);
  CHECK(p.alphas[0].values[1] == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(p.alphas[0].values[0] == doctest::Approx(19.0).epsilon(1e-9));
  CHECK(std::abs(solver::value(p, two(1.0)) - 20.0) < 1e-6);
}

TEST_CASE("finite horizon counts backups from zero") {
  auto m = chain_model();
  solver::QmdpOptions o;
  o.horizon = 1;
  auto p = solver::solve_qmdp(m, o);
  CHECK(p.alphas[0].values == std::vector<double>{0.0, 1.0});
  o.horizon = 2;
  p = solver::solve_qmdp(m, o);
  CHECK(p.alphas[0].values[0] == doctest::Approx(0.95));
  CHECK(p.alphas[0].values[1] == doctest::Approx(1.95));
  CHECK(p.stats.iterations == 2);

  solver::PbviOptions po;
  po.horizon = 2;
  auto q = solver::solve_pbvi(m, {two(0.0), two(1.0)}, po);
  CHECK(solver::value(q, two(0.0)) == doctest::Approx(0.95));
  CHECK(solver::value(q, two(1.0)) == doctest::Approx(1.95));
}

TEST_CASE("tiger PBVI matches a dense-grid reference") {
  auto m = tiger_model();
  auto p = tiger_pbvi(m);
  std::vector<double> qs{0.5, 0.15, 0.85, 0.03};
  auto ref = testing::grid_reference(m, qs);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    CAPTURE(qs[i]);
    CHECK(std::abs(solver::value(p, two(qs[i])) - ref[i]) < 1e-3);
  }
  CHECK(solver::best_action(p, two(0.5)) == 0);  // listen when uncertain
  CHECK(p.actions[solver::best_action(p, two(0.01))] == "open_right");
}

TEST_CASE("QMDP bounds PBVI from above") {
  auto m = tiger_model();
  auto q = solver::solve_qmdp(m);
  auto p = tiger_pbvi(m);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    auto b = random_belief(2, rng);
    CHECK(solver::value(q, b) >= solver::value(p, b) - 1e-9);
  }
}

TEST_CASE("zero reward gives zero vectors") {
  testing::TigerParams tp;
  tp.listen_cost = tp.treasure = tp.tiger = 0.0;
  auto m = tiger_model(tp);
  for (const auto& a : solver::solve_qmdp(m).alphas)
    for (double v : a.values) CHECK(std::abs(v) < 1e-9);
  for (const auto& a : tiger_pbvi(m).alphas)
    for (double v : a.values) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("with one action PBVI, QMDP and policy evaluation coincide") {
  // One action, noisy two-state dynamics.
  solver::DenseModel m({"only"}, {{{0.7, 0.3}, {0.4, 0.6}}}, {{{0.8, 0.2}, {0.3, 0.7}}}, {{2.0, -1.0}}, 0.9);
  // Policy evaluation by hand: V = (I - gT)^-1 R.
  const double g = 0.9;
  double a = 1 - g * 0.7, b = -g * 0.3, c = -g * 0.4, d = 1 - g * 0.6;
  double det = a * d - b * c;
  double v0 = (d * 2.0 - b * -1.0) / det, v1 = (a * -1.0 - c * 2.0) / det;
  solver::QmdpOptions qo;
  qo.tolerance = 1e-12;
  auto q = solver::solve_qmdp(m, qo);
  CHECK(q.alphas[0].values[0] == doctest::Approx(v0).epsilon(1e-9));
  CHECK(q.alphas[0].values[1] == doctest::Approx(v1).epsilon(1e-9));
  solver::PbviOptions po;
  po.tolerance = 1e-10;
  po.max_iterations = 5000;
  auto p = solver::solve_pbvi(m, {two(0.0), two(0.5), two(1.0)}, po);
  for (double x : {0.0, 0.3, 0.5, 1.0}) CHECK(solver::value(p, two(x)) == doctest::Approx(solver::value(q, two(x))).epsilon(1e-7));
}

TEST_CASE("more belief points never lower the value at the original points") {
  auto m = tiger_model();
  std::vector<double> init{0.5, 0.5};
  auto small = solver::sample_beliefs(m, init, 8, 5, 4);
  auto extra = solver::sample_beliefs(m, init, 100, 30, 9);
  auto big = small;
  big.insert(big.end(), extra.begin(), extra.end());
  solver::PbviOptions o;
  o.tolerance = 1e-8;
  o.max_iterations = 3000;
  auto p1 = solver::solve_pbvi(m, small, o);
  auto p2 = solver::solve_pbvi(m, big, o);
  for (const auto& b : small) CHECK(solver::value(p2, b) >= solver::value(p1, b) - 1e-4);
}

TEST_CASE("PBVI value at each point never drops between iterations") {
  auto m = tiger_model();
  auto beliefs = solver::sample_beliefs(m, std::vector<double>{0.5, 0.5}, 50, 20, 2);
  std::vector<double> last;
  bool monotone = true;
  solver::PbviOptions o;
  o.on_iteration = [&](int, const std::vector<double>& v) {
    if (!last.empty())
      for (std::size_t i = 0; i < v.size(); ++i) monotone = monotone && v[i] >= last[i] - 1e-9;
    last = v;
  };
  solver::solve_pbvi(m, beliefs, o);
  CHECK(monotone);
  CHECK_FALSE(last.empty());
}

TEST_CASE("action values and tie-breaking") {
  solver::Policy p;
  p.actions = {"zeta", "alpha", "mid"};
  for (std::size_t a = 0; a < 3; ++a) p.alphas.push_back({a, {0.0, 0.0, 0.0}});
  std::vector<double> b{0.2, 0.3, 0.5};
  for (const auto& av : solver::action_values(p, b)) CHECK(av.value == 0.0);
  CHECK(solver::best_action(p, b) == 1);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-10, 10);
  solver::Policy q;
  q.actions = {"a", "b"};
  for (int i = 0; i < 6; ++i) {
    solver::AlphaVector v{static_cast<std::size_t>(i % 2), std::vector<double>(37)};
    for (auto& x : v.values) x = u(rng);
    q.alphas.push_back(v);
  }
  for (int t = 0; t < 20; ++t) {
    auto bel = random_belief(37, rng);
    auto vals = solver::action_values(q, bel);
    for (std::size_t a = 0; a < 2; ++a) {
      double best = -INFINITY;
      for (const auto& v : q.alphas) {
        if (v.action != a) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < 37; ++i) s += v.values[i] * bel[i];
        best = std::max(best, s);
      }
      CHECK(std::abs(vals[a].value - best) < 1e-12);
    }
  }
  solver::Policy missing = q;
  missing.actions.push_back("c");
  CHECK(std::isinf(solver::action_values(missing, random_belief(37, rng))[2].value));
  auto table = solver::format_action_values(solver::action_values(q, random_belief(37, rng)));
  CHECK(table.find("a") != std::string::npos);
}

TEST_CASE("value is convex in the belief") {
  auto m = tiger_model();
  auto p = tiger_pbvi(m);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    auto b1 = random_belief(2, rng), b2 = random_belief(2, rng);
    double l = u(rng);
    std::vector<double> mix{l * b1[0] + (1 - l) * b2[0], l * b1[1] + (1 - l) * b2[1]};
    CHECK(solver::value(p, mix) <= l * solver::value(p, b1) + (1 - l) * solver::value(p, b2) + 1e-9);
  }
}

TEST_CASE("raising an action's cost never raises its value and eventually drops it") {
  std::vector<double> q_values, p_values;
  std::string last_best;
  std::vector<double> b{0.5, 0.5};
  for (double cost : {0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 200.0}) {
    testing::TigerParams tp;
    tp.listen_cost = cost;
    auto m = tiger_model(tp);
    auto q = solver::solve_qmdp(m);
    auto p = tiger_pbvi(m);
    q_values.push_back(solver::action_values(q, b)[0].value);
    p_values.push_back(solver::action_values(p, b)[0].value);
    last_best = p.actions[solver::best_action(p, b)];
  }
  for (std::size_t i = 1; i < q_values.size(); ++i) {
    CHECK(q_values[i] <= q_values[i - 1] + 1e-9);
    CHECK(p_values[i] <= p_values[i - 1] + 1e-6);
  }
  CHECK(last_best != "listen");
}

TEST_CASE("scaling the rewards keeps the greedy action") {
  testing::TigerParams tp;
  auto m1 = tiger_model(tp);
  tp.scale = 2.0;
  auto m2 = tiger_model(tp);
  auto p1 = tiger_pbvi(m1), p2 = tiger_pbvi(m2);
  auto q1 = solver::solve_qmdp(m1), q2 = solver::solve_qmdp(m2);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    auto b = random_belief(2, rng);
    CHECK(solver::best_action(p1, b) == solver::best_action(p2, b));
    CHECK(solver::best_action(q1, b) == solver::best_action(q2, b));
  }

  auto h1 = handwashing();
  auto h2 = handwashing([](task::SpecDocument& s) {
    for (auto& r : s.rewards) r.value *= 3.0;
    for (auto& a : s.abilities) a.prompt_cost *= 3.0;
  });
  auto a1 = solver::solve_qmdp(*h1.flat), a2 = solver::solve_qmdp(*h2.flat);
  auto pts = solver::sample_beliefs(*h1.flat, h1.flat->initial_belief(), 40, 20, 3);
  for (const auto& b : pts) CHECK(solver::best_action(a1, b) == solver::best_action(a2, b));
}

TEST_CASE("QMDP on the handwashing model bounds PBVI") {
  auto h = handwashing();
  auto start = std::chrono::steady_clock::now();
  auto q = solver::solve_qmdp(*h.flat);
  auto beliefs = solver::sample_beliefs(*h.flat, h.flat->initial_belief(), 24, 15, 1);
  solver::PbviOptions o;
  o.max_iterations = 25;
  auto p = solver::solve_pbvi(*h.flat, beliefs, o);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("handwashing QMDP + PBVI: " << secs << " s");
  for (const auto& b : beliefs) CHECK(solver::value(q, b) >= solver::value(p, b) - 1e-9);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    auto b = random_belief(h.flat->num_states(), rng);
    CHECK(solver::value(q, b) >= solver::value(p, b) - 1e-9);
  }
}

TEST_CASE("sampled beliefs are distinct distributions") {
  auto m = tiger_model();
  auto bs = solver::sample_beliefs(m, std::vector<double>{0.5, 0.5}, 50, 10, 1);
  CHECK_FALSE(bs.empty());
  CHECK(bs.size() <= 50);
  for (std::size_t i = 0; i < bs.size(); ++i) {
    CHECK(bs[i][0] + bs[i][1] == doctest::Approx(1.0));
    for (std::size_t j = 0; j < i; ++j) CHECK(bs[i] != bs[j]);
  }
  CHECK(solver::sample_beliefs(m, std::vector<double>{0.5, 0.5}, 50, 10, 1) == bs);
}

TEST_CASE("backup improves on the current vectors at the point") {
  auto m = tiger_model();
  std::vector<solver::AlphaVector> zero{{0, {0.0, 0.0}}};
  auto out = solver::backup(m, zero, two(0.5));
  REQUIRE(out.size() == 3);
  CHECK(out[0].values == std::vector<double>{-1.0, -1.0});
  CHECK(out[1].values == std::vector<double>{-100.0, 10.0});
}

TEST_CASE("policies survive a save/load round trip") {
  auto p = tiger_pbvi(tiger_model());
  auto text = solver::save_policy(p);
  auto back = solver::load_policy(text);
  CHECK(solver::save_policy(back) == text);
  CHECK(back.alphas.size() == p.alphas.size());
  for (std::size_t i = 0; i < p.alphas.size(); ++i) CHECK(back.alphas[i].values == p.alphas[i].values);
  CHECK(back.kind == solver::PolicyKind::pbvi);
  CHECK_THROWS_AS(solver::load_policy("kind qmdp\nalpha nowhere 1 2\n"), solver::PolicyFormatError);
  CHECK_THROWS_AS(solver::load_policy(""), solver::PolicyFormatError);
}

TEST_CASE("solves can be cancelled") {
  auto m = tiger_model();
  solver::QmdpOptions qo;
  qo.cancelled = [] { return true; };
  CHECK_THROWS_AS(solver::solve_qmdp(m, qo), solver::SolveCancelled);
  solver::PbviOptions po;
  int polls = 0;
  po.cancelled = [&] { return ++polls > 3; };
  CHECK_THROWS_AS(solver::solve_pbvi(m, {two(0.5), two(0.2)}, po), solver::SolveCancelled);
}
