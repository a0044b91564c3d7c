#include <cmath>
#include <numeric>
#include <random>

#include "snap/flat_model.hpp"
#include "snap/validator.hpp"
#include "support.hpp"

using namespace snap;
using snap::testing::load_fixture;

namespace {

compiler::CompiledPOMDP compile_fixture(const std::string& name) {
  auto rep = validator::validate(load_fixture(name));
  REQUIRE_FALSE(has_errors(rep.diagnostics));
  return compiler::compile(rep.expanded);
}

// Current or primed slice of an assignment from a flat index, decoded by hand.
void assign(const compiler::CompiledPOMDP& m, std::size_t s, add::Assignment& x, bool primed) {
  const std::size_t nY = std::size_t{1} << m.ability_vars.size();
  const std::size_t nB = m.behaviour_count();
  std::size_t y = s % nY;
  std::size_t b = (s / nY) % nB;
  std::size_t t = s / nY / nB;
  auto ts = task::decode(m.spec, t);
  for (std::size_t i = 0; i < ts.size(); ++i) x[primed ? m.task_vars[i].primed : m.task_vars[i].cur] = ts[i];
  x[primed ? m.behaviour_var.primed : m.behaviour_var.cur] = static_cast<std::uint32_t>(b);
  const std::size_t n = m.ability_vars.size();
  for (std::size_t k = 0; k < n; ++k)
    x[primed ? m.ability_vars[k].primed : m.ability_vars[k].cur] = (y >> (n - 1 - k)) & 1u;
}

double product_of_cpts(const compiler::CompiledPOMDP& m, std::size_t a, std::size_t s, std::size_t s2) {
  add::Assignment x(m.mgr->num_vars(), 0);
  x[m.action_var] = static_cast<std::uint32_t>(a);
  assign(m, s, x, false);
  assign(m, s2, x, true);
  double p = m.behaviour_cpt.dd.evaluate(x);
  for (const auto& c : m.ability_cpts) p *= c.dd.evaluate(x);
  for (const auto& c : m.task_cpts) p *= c.dd.evaluate(x);
  return p;
}

std::vector<double> random_belief(std::size_t n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> b(n);
  for (auto& v : b) v = e(rng);
  double s = std::accumulate(b.begin(), b.end(), 0.0);
  for (auto& v : b) v /= s;
  return b;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

TEST_CASE("flat transition rows are products of the factored CPTs") {
  auto m = compile_fixture("handwashing.json");
  solver::FactoredFlatModel flat(m);
  REQUIRE(flat.num_states() == 12288);
  REQUIRE(flat.num_observations() == 24);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t a = rng() % flat.num_actions();
    std::size_t s = rng() % flat.num_states();
    auto row = flat.transition_row(a, s);
    double worst = 0.0, sum = 0.0;
    for (std::size_t s2 = 0; s2 < flat.num_states(); ++s2) {
      worst = std::max(worst, std::abs(row[s2] - product_of_cpts(m, a, s, s2)));
      sum += row[s2];
    }
    CHECK(worst < 1e-12);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("observation likelihoods are products of the sensor CPTs") {
  auto m = compile_fixture("handwashing.json");
  solver::FactoredFlatModel flat(m);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t s2 = rng() % flat.num_states();
    std::size_t o = rng() % flat.num_observations();
    add::Assignment x(m.mgr->num_vars(), 0);
    assign(m, s2, x, true);
    auto readings = flat.observation_readings(o);
    CHECK(flat.observation_index(readings) == o);
    double want = 1.0;
    for (std::size_t k = 0; k < readings.size(); ++k) {
      x[m.sensor_vars[k]] = static_cast<std::uint32_t>(readings[k]);
      want *= m.sensor_cpts[k].dd.evaluate(x);
    }
    CHECK(flat.observation_column(0, o)[s2] == doctest::Approx(want).epsilon(1e-14));
  }
  // Likelihoods over observations sum to one for every state.
  std::vector<double> total(flat.num_states(), 0.0);
  for (std::size_t o = 0; o < flat.num_observations(); ++o) {
    auto col = flat.observation_column(0, o);
    for (std::size_t s = 0; s < total.size(); ++s) total[s] += col[s];
  }
  for (double t : total) CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("backward is the adjoint of forward") {
  for (const char* name : {"handwashing.json", "factory_step2.json"}) {
    CAPTURE(name);
    auto m = compile_fixture(name);
    solver::FactoredFlatModel flat(m);
    std::mt19937_64 rng(8);
    std::vector<double> out(flat.num_states()), back(flat.num_states());
    for (std::size_t a = 0; a < flat.num_actions(); ++a) {
      auto b = random_belief(flat.num_states(), rng);
      std::vector<double> v(flat.num_states());
      for (auto& x : v) x = std::uniform_real_distribution<double>(-1, 1)(rng);
      flat.forward(a, b, out);
      flat.backward(a, v, back);
      CHECK(dot(out, v) == doctest::Approx(dot(b, back)).epsilon(1e-12));
      CHECK(std::accumulate(out.begin(), out.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("factored and dense ability stages agree") {
  auto m = compile_fixture("handwashing.json");
  solver::FlattenOptions dense;
  dense.factor_abilities = false;
  solver::FactoredFlatModel f1(m), f2(m, dense);
  std::mt19937_64 rng(6);
  std::vector<double> o1(f1.num_states()), o2(f1.num_states());
  for (std::size_t a = 0; a < f1.num_actions(); ++a) {
    auto b = random_belief(f1.num_states(), rng);
    f1.forward(a, b, o1);
    f2.forward(a, b, o2);
    for (std::size_t s = 0; s < o1.size(); ++s) CHECK(o1[s] == doctest::Approx(o2[s]).epsilon(1e-12));
    f1.backward(a, b, o1);
    f2.backward(a, b, o2);
    for (std::size_t s = 0; s < o1.size(); ++s) CHECK(o1[s] == doctest::Approx(o2[s]).epsilon(1e-12));
  }
}

TEST_CASE("rewards are state reward net of the action cost") {
  auto m = compile_fixture("handwashing.json");
  solver::FactoredFlatModel flat(m);
  for (std::size_t a = 0; a < flat.num_actions(); ++a)
    for (std::size_t s = 0; s < flat.num_states(); s += 97) {
      add::Assignment x(m.mgr->num_vars(), 0);
      assign(m, s, x, false);
      CHECK(flat.reward(a)[s] == doctest::Approx(m.reward.evaluate(x) - m.actions[a].cost).epsilon(1e-14));
    }
}

TEST_CASE("initial belief matches the compiled prior") {
  auto m = compile_fixture("handwashing.json");
  solver::FactoredFlatModel flat(m);
  auto b = flat.initial_belief();
  double sum = 0.0;
  for (std::size_t s = 0; s < b.size(); ++s) {
    add::Assignment x(m.mgr->num_vars(), 0);
    assign(m, s, x, false);
    CHECK(b[s] == doctest::Approx(m.initial_belief.evaluate(x)).epsilon(1e-14));
    sum += b[s];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  auto st = flat.decode(flat.index({5, 3, 17}));
  CHECK(st.task == 5);
  CHECK(st.behaviour == 3);
  CHECK(st.abilities == 17);
  CHECK(flat.has_ability(0b100000, 0));
  CHECK_FALSE(flat.has_ability(0b100000, 1));
}

TEST_CASE("size limits are enforced") {
  auto m = compile_fixture("handwashing.json");
  solver::FlattenOptions small;
  small.max_states = 1000;
  CHECK_THROWS_AS(solver::FactoredFlatModel(m, small), solver::FlatModelError);
  small = {};
  small.max_observations = 10;
  CHECK_THROWS_AS(solver::FactoredFlatModel(m, small), solver::FlatModelError);
}

TEST_CASE("dense model products") {
  // Two states, two observations, one action.
  solver::DenseModel d({"a"}, {{{0.9, 0.1}, {0.2, 0.8}}}, {{{0.7, 0.3}, {0.4, 0.6}}}, {{1.0, -1.0}}, 0.9);
  std::vector<double> b{0.25, 0.75}, out(2);
  d.forward(0, b, out);
  CHECK(out[0] == doctest::Approx(0.25 * 0.9 + 0.75 * 0.2));
  CHECK(out[1] == doctest::Approx(0.25 * 0.1 + 0.75 * 0.8));
  d.backward(0, std::vector<double>{1.0, 2.0}, out);
  CHECK(out[0] == doctest::Approx(0.9 + 0.2));
  CHECK(out[1] == doctest::Approx(0.2 + 1.6));
  std::vector<double> w{1.0, 1.0};
  d.weight_by_observation(0, 1, w);
  CHECK(w[0] == 0.3);
  CHECK(w[1] == 0.6);
  CHECK_THROWS_AS(solver::DenseModel({"a"}, {{{0.5, 0.6}, {0.2, 0.8}}}, {{{0.7, 0.3}, {0.4, 0.6}}}, {{1.0, -1.0}}, 0.9),
                  solver::FlatModelError);
}
