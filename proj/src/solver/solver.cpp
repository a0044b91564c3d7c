#include "snap/solver.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "snap/kernels.hpp"
#include "snap/spudd.hpp"

namespace snap::solver {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double dot(std::span<const double> x, std::span<const double> y) { return kernels::dot(x, y); }

std::size_t best_vector(std::span<const AlphaVector> alphas, std::span<const double> b, double* value_out) {
  std::size_t best = 0;
  double bv = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    double v = dot(alphas[i].values, b);
    if (v > bv) {
      bv = v;
      best = i;
    }
  }
  if (value_out) *value_out = bv;
  return best;
}

}  // namespace

std::string_view kind_name(PolicyKind k) { return k == PolicyKind::qmdp ? "qmdp" : "pbvi"; }

Policy solve_qmdp(const FlatModel& model, const QmdpOptions& options) {
  const auto t0 = Clock::now();
  const std::size_t n = model.num_states(), na = model.num_actions();
  const double g = model.discount();
  double rmax = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < na; ++a)
    for (double r : model.reward(a)) rmax = std::max(rmax, r);

  Policy p;
  p.kind = PolicyKind::qmdp;
  p.actions = model.action_names();
  p.discount = g;
  std::vector<double> v(n, options.horizon ? 0.0 : rmax / (1.0 - g)), next(n), tmp(n);
  std::vector<std::vector<double>> q(na, std::vector<double>(n));
  const int max_it = options.horizon ? *options.horizon : options.max_iterations;
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (it < max_it) {
    if (options.cancelled && options.cancelled()) throw SolveCancelled();
    ++it;
    std::fill(next.begin(), next.end(), -std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < na; ++a) {
      model.backward(a, v, tmp);
      const auto& r = model.reward(a);
      for (std::size_t s = 0; s < n; ++s) q[a][s] = r[s] + g * tmp[s];
      kernels::max_inplace(q[a], next);
    }
    residual = kernels::max_abs_diff(next, v);
    v.swap(next);
    if (!options.horizon && residual < options.tolerance) break;
  }
  for (std::size_t a = 0; a < na; ++a) p.alphas.push_back({a, std::move(q[a])});
  p.stats = {it, residual, options.horizon ? it == *options.horizon : residual < options.tolerance, seconds_since(t0)};
  return p;
}

std::vector<std::vector<double>> sample_beliefs(const FlatModel& model, std::span<const double> initial,
                                                std::size_t count, std::size_t trajectory_length,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = model.num_states(), na = model.num_actions(), no = model.num_observations();
  std::vector<std::vector<double>> out;
  auto known = [&](const std::vector<double>& b) {
    for (const auto& x : out)
      if (kernels::max_abs_diff(x, b) < 1e-9) return true;
    return false;
  };
  auto sample = [&](std::span<const double> dist) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng), acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      acc += dist[i];
      if (r < acc) return i;
    }
    for (std::size_t i = dist.size(); i-- > 0;)
      if (dist[i] > 0.0) return i;
    return std::size_t{0};
  };

  std::vector<double> b0(initial.begin(), initial.end());
  out.push_back(b0);
  std::vector<double> pred(n), next(n), obs(no);
  std::size_t attempts = 0;
  const std::size_t max_attempts = count * trajectory_length * 4 + 16;
  while (out.size() < count && attempts < max_attempts) {
    std::vector<double> b = b0;
    std::size_t s = sample(b);
    for (std::size_t step = 0; step < trajectory_length && out.size() < count; ++step, ++attempts) {
      std::size_t a = std::uniform_int_distribution<std::size_t>(0, na - 1)(rng);
      std::size_t s2 = sample(model.transition_row(a, s));
      const std::size_t blk = s2 / model.block_size();
      for (std::size_t o = 0; o < no; ++o) obs[o] = model.block_likelihood(a, o, blk);
      std::size_t o = sample(obs);
      model.forward(a, b, pred);
      model.weight_by_observation(a, o, pred);
      double z = kernels::sum(pred);
      if (!(z > 0.0)) break;
      kernels::scale(1.0 / z, pred);
      b = pred;
      s = s2;
      if (!known(b)) out.push_back(b);
    }
  }
  return out;
}

std::vector<AlphaVector> backup(const FlatModel& model, std::span<const AlphaVector> alphas,
                                std::span<const double> belief) {
  const std::size_t n = model.num_states(), na = model.num_actions(), no = model.num_observations();
  const std::size_t bs = model.block_size(), nblk = n / bs;
  const double g = model.discount();
  const auto& k = kernels::active();
  std::vector<AlphaVector> out;
  std::vector<double> fb(n), acc(n), back(n), coef(nblk);
  std::vector<std::size_t> live;
  std::vector<double> d, score(alphas.size());
  std::vector<std::size_t> choice(no);

  for (std::size_t a = 0; a < na; ++a) {
    model.forward(a, belief, fb);
    live.clear();
    for (std::size_t blk = 0; blk < nblk; ++blk)
      for (std::size_t i = 0; i < bs; ++i)
        if (fb[blk * bs + i] != 0.0) {
          live.push_back(blk);
          break;
        }
    // d[l * |alphas| + i] = predicted mass of live block l weighted by alpha i.
    d.assign(live.size() * alphas.size(), 0.0);
    for (std::size_t l = 0; l < live.size(); ++l)
      for (std::size_t i = 0; i < alphas.size(); ++i)
        d[l * alphas.size() + i] = k.dot(fb.data() + live[l] * bs, alphas[i].values.data() + live[l] * bs, bs);
    for (std::size_t o = 0; o < no; ++o) {
      std::fill(score.begin(), score.end(), 0.0);
      for (std::size_t l = 0; l < live.size(); ++l) {
        double lik = model.block_likelihood(a, o, live[l]);
        if (lik != 0.0) k.axpy(lik, d.data() + l * alphas.size(), score.data(), alphas.size());
      }
      choice[o] = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    std::vector<std::size_t> used(choice.begin(), choice.end());
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    for (std::size_t i : used) {
      std::fill(coef.begin(), coef.end(), 0.0);
      for (std::size_t o = 0; o < no; ++o)
        if (choice[o] == i)
          for (std::size_t blk = 0; blk < nblk; ++blk) coef[blk] += model.block_likelihood(a, o, blk);
      for (std::size_t blk = 0; blk < nblk; ++blk)
        if (coef[blk] != 0.0) k.axpy(coef[blk], alphas[i].values.data() + blk * bs, acc.data() + blk * bs, bs);
    }
    model.backward(a, acc, back);
    AlphaVector v{a, model.reward(a)};
    k.axpy(g, back.data(), v.values.data(), n);
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::vector<AlphaVector> blind_vectors(const FlatModel& model) {
  const std::size_t n = model.num_states(), na = model.num_actions();
  const double g = model.discount();
  std::vector<AlphaVector> out;
  std::vector<double> back(n);
  for (std::size_t a = 0; a < na; ++a) {
    const auto& r = model.reward(a);
    double rmin = *std::min_element(r.begin(), r.end());
    std::vector<double> v(n, rmin / (1.0 - g)), next(n);
    // Increases monotonically from below, so every iterate is a lower bound.
    for (int it = 0; it < 5000; ++it) {
      model.backward(a, v, back);
      for (std::size_t s = 0; s < n; ++s) next[s] = r[s] + g * back[s];
      double diff = kernels::max_abs_diff(next, v);
      v.swap(next);
      if (diff < 1e-3) break;
    }
    out.push_back({a, std::move(v)});
  }
  return out;
}

}  // namespace

Policy solve_pbvi(const FlatModel& model, std::vector<std::vector<double>> beliefs, const PbviOptions& options) {
  if (beliefs.empty()) throw std::invalid_argument("solve_pbvi needs at least one belief point");
  const auto t0 = Clock::now();
  std::mt19937_64 rng(options.seed);
  const std::size_t nb = beliefs.size();

  std::vector<AlphaVector> v =
      options.horizon ? std::vector<AlphaVector>{{0, std::vector<double>(model.num_states(), 0.0)}} : blind_vectors(model);
  // Under a horizon the per-action pass is the last backup.
  const int max_it = options.horizon ? std::max(0, *options.horizon - (options.per_action_vectors ? 1 : 0))
                                     : options.max_iterations;
  std::vector<double> vals(nb);
  for (std::size_t j = 0; j < nb; ++j) best_vector(v, beliefs[j], &vals[j]);

  Policy p;
  p.kind = PolicyKind::pbvi;
  p.actions = model.action_names();
  p.discount = model.discount();
  int it = 0;
  double residual = std::numeric_limits<double>::infinity();
  const double ninf = -std::numeric_limits<double>::infinity();

  while (it < max_it) {
    if (options.time_limit_seconds > 0.0 && seconds_since(t0) > options.time_limit_seconds) break;
    ++it;
    std::vector<AlphaVector> next;
    std::vector<double> next_vals(nb, ninf);
    std::vector<std::size_t> todo(nb);
    for (std::size_t j = 0; j < nb; ++j) todo[j] = j;
    std::vector<char> copied(v.size(), 0);
    // A point leaves the work list once another backup strictly improves it
    // or it has been backed up itself; ties alone keep it.
    std::vector<char> backed(nb, 0);
    auto add = [&](AlphaVector alpha) {
      for (std::size_t j = 0; j < nb; ++j) next_vals[j] = std::max(next_vals[j], dot(alpha.values, beliefs[j]));
      next.push_back(std::move(alpha));
    };
    while (!todo.empty()) {
      if (options.cancelled && options.cancelled()) throw SolveCancelled();
      std::size_t pick = std::uniform_int_distribution<std::size_t>(0, todo.size() - 1)(rng);
      std::size_t j = todo[pick];
      backed[j] = 1;
      auto cands = backup(model, v, beliefs[j]);
      double bv;
      std::size_t bi = best_vector(cands, beliefs[j], &bv);
      if (bv >= vals[j]) {
        add(std::move(cands[bi]));
      } else {
        std::size_t old = best_vector(v, beliefs[j], nullptr);
        if (!copied[old]) {
          copied[old] = 1;
          add(v[old]);
        }
      }
      std::vector<std::size_t> rest;
      for (std::size_t x : todo)
        if (!backed[x] && next_vals[x] <= vals[x]) rest.push_back(x);
      todo.swap(rest);
    }
    residual = 0.0;
    for (std::size_t j = 0; j < nb; ++j) residual = std::max(residual, next_vals[j] - vals[j]);
    v.swap(next);
    vals.swap(next_vals);
    if (options.on_iteration) options.on_iteration(it, vals);
    if (!options.horizon && residual < options.tolerance) break;
  }

  if (options.per_action_vectors && !(options.horizon && *options.horizon == 0)) {
    std::vector<AlphaVector> extra;
    for (const auto& b : beliefs) {
      if (options.cancelled && options.cancelled()) throw SolveCancelled();
      for (auto& alpha : backup(model, v, b)) extra.push_back(std::move(alpha));
    }
    if (options.horizon) {
      v = std::move(extra);
      ++it;
    } else {
      for (auto& alpha : extra) v.push_back(std::move(alpha));
    }
  }
  p.alphas = std::move(v);
  p.beliefs = std::move(beliefs);
  p.stats = {it, residual, options.horizon ? it == *options.horizon : residual < options.tolerance, seconds_since(t0)};
  return p;
}

std::vector<ActionValue> action_values(const Policy& policy, std::span<const double> belief) {
  std::vector<ActionValue> out;
  for (const auto& a : policy.actions) out.push_back({a, -std::numeric_limits<double>::infinity()});
  for (const auto& alpha : policy.alphas) {
    double v = dot(alpha.values, belief);
    if (v > out[alpha.action].value) out[alpha.action].value = v;
  }
  return out;
}

double value(const Policy& policy, std::span<const double> belief) {
  double v;
  best_vector(policy.alphas, belief, &v);
  return v;
}

std::size_t best_action(const std::vector<ActionValue>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const auto& x = values[i];
    const auto& y = values[best];
    if (x.value > y.value || (x.value == y.value && x.action < y.action)) best = i;
  }
  return best;
}

std::size_t best_action(const Policy& policy, std::span<const double> belief) {
  return best_action(action_values(policy, belief));
}

std::string format_action_values(const std::vector<ActionValue>& values) {
  std::size_t width = 6;
  for (const auto& v : values) width = std::max(width, v.action.size());
  std::string out = "action" + std::string(width - 6 + 2, ' ') + "value\n";
  char buf[64];
  for (const auto& v : values) {
    std::snprintf(buf, sizeof buf, "%.3f", v.value);
    out += v.action + std::string(width - v.action.size() + 2, ' ') + buf + "\n";
  }
  return out;
}

std::string save_policy(const Policy& p) {
  std::string out = "policy " + std::string(kind_name(p.kind)) + "\n";
  out += "discount " + spudd::format_real(p.discount) + "\n";
  out += "iterations " + std::to_string(p.stats.iterations) + "\n";
  out += "residual " + spudd::format_real(p.stats.residual) + "\n";
  out += std::string("converged ") + (p.stats.converged ? "yes" : "no") + "\n";
  out += "states " + std::to_string(p.num_states()) + "\n";
  out += "actions";
  for (const auto& a : p.actions) out += " " + a;
  out += "\n";
  for (const auto& alpha : p.alphas) {
    out += "alpha " + p.actions[alpha.action];
    for (double x : alpha.values) out += " " + spudd::format_real(x);
    out += "\n";
  }
  return out;
}

Policy load_policy(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  Policy p;
  std::size_t states = 0;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw PolicyFormatError("line " + std::to_string(lineno) + ": " + msg);
  };
  auto real = [&](const std::string& tok) {
    double v = 0.0;
    if (tok == "inf") return std::numeric_limits<double>::infinity();
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
    return v;
  };
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "policy") {
      std::string k;
      ls >> k;
      if (k == "qmdp") p.kind = PolicyKind::qmdp;
      else if (k == "pbvi") p.kind = PolicyKind::pbvi;
      else fail("unknown policy kind '" + k + "'");
      header = true;
    } else if (!header) {
      fail("expected 'policy'");
    } else if (key == "discount" || key == "residual") {
      std::string tok;
      ls >> tok;
      (key == "discount" ? p.discount : p.stats.residual) = real(tok);
    } else if (key == "iterations") {
      ls >> p.stats.iterations;
    } else if (key == "converged") {
      std::string tok;
      ls >> tok;
      p.stats.converged = tok == "yes";
    } else if (key == "states") {
      ls >> states;
    } else if (key == "actions") {
      std::string a;
      while (ls >> a) p.actions.push_back(a);
    } else if (key == "alpha") {
      std::string a;
      ls >> a;
      auto it = std::find(p.actions.begin(), p.actions.end(), a);
      if (it == p.actions.end()) fail("unknown action '" + a + "'");
      AlphaVector v{static_cast<std::size_t>(it - p.actions.begin()), {}};
      std::string tok;
      while (ls >> tok) v.values.push_back(real(tok));
      if (v.values.size() != states) fail("alpha vector has " + std::to_string(v.values.size()) + " entries");
      p.alphas.push_back(std::move(v));
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw PolicyFormatError("empty policy text");
  return p;
}

}  // namespace snap::solver
