#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "snap/spudd.hpp"

using namespace snap;
using add::Add;
using add::Assignment;
using add::VarId;

TEST_CASE("format_real reads back exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    double x = u(rng);
    auto s = spudd::format_real(x);
    CHECK(std::stod(s) == x);
  }
  for (double x : {0.0, 1.0, -2.0, 0.1, 1e-300, 1e300, 0.01}) {
    auto s = spudd::format_real(x);
    CHECK(std::stod(s) == x);
    CHECK(s.find_first_of(".e") != std::string::npos);
  }
}

TEST_CASE("emit then parse then emit is byte-identical") {
  auto mgr = std::make_shared<add::Manager>();
  VarId x = mgr->declare("x", {"lo", "mid", "hi"});
  VarId y = mgr->declare("y", {"no", "yes"});
  std::vector<VarId> vars{x, y};
  Add d = add::tabulate(mgr, vars, [&](const Assignment& a) { return a[x] == 2 ? 0.25 : (a[y] ? 0.1 + a[x] : 1.0 / 3.0); });
  auto text = spudd::emit(d, "f");
  auto back = spudd::parse(text, mgr);
  CHECK(back.name == "f");
  CHECK(back.dd == d);
  CHECK(spudd::emit(back.dd, "f") == text);
  auto pretty = spudd::emit_pretty(d, "f");
  CHECK(spudd::parse(pretty, mgr).dd == d);
}

TEST_CASE("parse accepts comments and several blocks") {
  auto mgr = std::make_shared<add::Manager>();
  mgr->declare("tap", {"on", "off"});
  auto all = spudd::parse_all("// header\ndd a (tap (on (1.0)) (off (0.0))) enddd\ndd b (0.5) enddd\n", mgr);
  REQUIRE(all.size() == 2);
  CHECK(all[0].dd == Add::indicator(mgr, "tap", "on"));
  CHECK(all[1].dd.constant_value() == 0.5);
}

TEST_CASE("parse errors carry a position") {
  auto mgr = std::make_shared<add::Manager>();
  mgr->declare("tap", {"on", "off"});
  auto fails_at = [&](std::string_view text, std::size_t line) {
    try {
      spudd::parse(text, mgr);
    } catch (const spudd::ParseError& e) {
      CHECK(e.line() == line);
      return true;
    }
    return false;
  };
  CHECK(fails_at("dd a (sink (on (1.0))) enddd", 1));                // unknown variable
  CHECK(fails_at("dd a\n(tap (on (1.0)) (dry (0.0))) enddd", 2));    // unknown value
  CHECK(fails_at("dd a (tap (on (1.0))) enddd", 1));                 // missing branch
  CHECK(fails_at("dd a (tap (on (1.0)) (on (0.0))) enddd", 1));      // duplicate branch
  CHECK(fails_at("dd a (tap (on (1.0)) (off (0.0)))", 1));           // no enddd
  CHECK(fails_at("dd a (abc) enddd", 1));                            // not a number
}
