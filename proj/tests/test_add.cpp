#include <cmath>
#include <random>

#include "doctest.h"
#include "snap/add.hpp"

using namespace snap::add;

namespace {

struct Vars {
  std::shared_ptr<Manager> mgr = std::make_shared<Manager>();
  VarId a, b, c;
  Vars() {
    a = mgr->declare("a", {"a0", "a1"});
    b = mgr->declare("b", {"b0", "b1", "b2"});
    c = mgr->declare("c", {"c0", "c1"});
  }
  std::vector<VarId> all() const { return {a, b, c}; }
};

// Every full assignment of a, b, c.
template <class F>
void each(const Vars& v, F&& f) {
  Assignment x(v.mgr->num_vars(), 0);
  for (x[v.a] = 0; x[v.a] < 2; ++x[v.a])
    for (x[v.b] = 0; x[v.b] < 3; ++x[v.b])
      for (x[v.c] = 0; x[v.c] < 2; ++x[v.c]) f(x);
}

// Small integer leaves so sums are exact.
std::function<double(const Assignment&)> random_fn(std::mt19937_64& rng) {
  std::vector<double> t(12);
  for (auto& x : t) x = static_cast<double>(std::uniform_int_distribution<int>(0, 4)(rng));
  return [t](const Assignment& x) { return t[(x[0] * 3 + x[1]) * 2 + x[2]]; };
}

}  // namespace

TEST_CASE("tabulate round-trips through evaluate") {
  Vars v;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_fn(rng);
    auto vars = v.all();
    Add d = tabulate(v.mgr, vars, f);
    each(v, [&](const Assignment& x) { CHECK(d.evaluate(x) == f(x)); });
  }
}

TEST_CASE("identical functions share one node") {
  Vars v;
  auto vars = v.all();
  Add x = tabulate(v.mgr, vars, [](const Assignment& s) { return s[1] == 2 ? 1.0 : 0.0; });
  Add y = Add::indicator(v.mgr, "b", "b2");
  CHECK(x == y);
  CHECK(x.support() == std::vector<VarId>{v.b});
  // A node whose children are all equal reduces to the child.
  NodeId leaf = v.mgr->leaf(2.5);
  std::vector<NodeId> kids{leaf, leaf};
  CHECK(v.mgr->node(v.a, kids) == leaf);
}

TEST_CASE("apply matches pointwise arithmetic") {
  Vars v;
  std::mt19937_64 rng(5);
  auto vars = v.all();
  for (int trial = 0; trial < 10; ++trial) {
    auto f = random_fn(rng), g = random_fn(rng);
    Add x = tabulate(v.mgr, vars, f), y = tabulate(v.mgr, vars, g);
    Add mul = x * y, sum = x + y, diff = x - y;
    Add mx = apply(Op::max, x, y), mn = apply(Op::min, x, y);
    each(v, [&](const Assignment& s) {
      CHECK(mul.evaluate(s) == f(s) * g(s));
      CHECK(sum.evaluate(s) == f(s) + g(s));
      CHECK(diff.evaluate(s) == f(s) - g(s));
      CHECK(mx.evaluate(s) == std::max(f(s), g(s)));
      CHECK(mn.evaluate(s) == std::min(f(s), g(s)));
    });
  }
}

TEST_CASE("restrict, sum_out and normalize_over") {
  Vars v;
  std::mt19937_64 rng(9);
  auto vars = v.all();
  auto f0 = random_fn(rng);
  auto f = [&](const Assignment& s) { return f0(s) + 1.0; };  // strictly positive
  Add d = tabulate(v.mgr, vars, f);

  Add r = restrict(d, v.b, 1);
  each(v, [&](const Assignment& s) {
    Assignment t = s;
    t[v.b] = 1;
    CHECK(r.evaluate(s) == f(t));
  });

  Add m = sum_out(d, v.b);
  auto sup = m.support();
  CHECK(std::find(sup.begin(), sup.end(), v.b) == sup.end());
  each(v, [&](const Assignment& s) {
    double expect = 0;
    Assignment t = s;
    for (t[v.b] = 0; t[v.b] < 3; ++t[v.b]) expect += f(t);
    CHECK(m.evaluate(s) == expect);
  });

  Add n = normalize_over(d, v.b);
  each(v, [&](const Assignment& s) {
    double total = 0;
    Assignment t = s;
    for (t[v.b] = 0; t[v.b] < 3; ++t[v.b]) total += f(t);
    CHECK(n.evaluate(s) == doctest::Approx(f(s) / total).epsilon(1e-15));
  });
}

TEST_CASE("normalize_over names the empty context") {
  Vars v;
  auto vars = v.all();
  Add d = tabulate(v.mgr, vars, [](const Assignment& s) { return s[0] == 1 && s[1] == 2 ? 0.0 : 1.0; });
  try {
    normalize_over(d, v.c);
    FAIL("expected ZeroMassError");
  } catch (const ZeroMassError& e) {
    CHECK(e.context().find("a=a1") != std::string::npos);
  }
}

TEST_CASE("leaf statistics and map_leaves") {
  Vars v;
  auto vars = v.all();
  Add d = tabulate(v.mgr, vars, [](const Assignment& s) { return double(s[0] + s[1] + s[2]); });
  CHECK(d.min_leaf() == 0.0);
  CHECK(d.max_leaf() == 4.0);
  Add sq = map_leaves(d, [](double x) { return x * x; });
  each(v, [&](const Assignment& s) { CHECK(sq.evaluate(s) == d.evaluate(s) * d.evaluate(s)); });
  CHECK(Add::constant(v.mgr, 3.0).is_constant());
  CHECK(Add::constant(v.mgr, 3.0).dag_size() == 1);
}

TEST_CASE("primed variables pair up in declaration order") {
  Manager m;
  auto [cur, primed] = m.declare_pair("tap", {"on", "off"});
  CHECK(primed == cur + 1);
  CHECK(m.var(primed).name == primed_name("tap"));
  CHECK(m.var(primed).slice == Slice::primed);
  CHECK(m.require("tap") == cur);
  CHECK_FALSE(m.find("nope").has_value());
  CHECK_THROWS_AS(m.require("nope"), AddError);
  CHECK_THROWS(m.declare("tap", {"x"}));
}
