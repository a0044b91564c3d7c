// snapgen: command-line front end for the designer loop.
//
//   snapgen validate --spec hw.json
//   snapgen expand   --spec hw.json --out hw.expanded.json
//   snapgen compile  --spec hw.json [--config run.json] --out hw.model
//   snapgen solve    --spec hw.json [--config run.json] [--seed N] --out hw.policy
//   snapgen simulate --spec hw.json [--interactive | --profile forgetful|able] [--seed N] [--steps N]
//   snapgen serve    [--port 8080] [--store DIR]
//
// Exit codes: 0 success, 1 diagnostics, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "snap/service.hpp"

using namespace snap;
using service::json;

namespace {

constexpr int kOk = 0, kDiagnostics = 1, kUsage = 2;

struct Options {
  std::string spec, config, out, profile = "forgetful", store = "snap-store", host = "127.0.0.1", trace_format = "table";
  std::uint64_t seed = 1;
  bool seed_given = false;
  int port = 8080;
  int steps = 30;
  bool interactive = false;
};

void print(const Diagnostics& ds) {
  for (const auto& d : ds) std::cerr << format(d) << "\n";
}

bool write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return true;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    std::cerr << "cannot write " << out << "\n";
    return false;
  }
  f << text;
  return true;
}

std::optional<task::SpecDocument> load(const Options& o) {
  auto r = task::load_spec_file(o.spec);
  print(r.diagnostics);
  return r.spec;
}

std::optional<service::RunConfig> load_config(const Options& o) {
  service::RunConfig run;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) {
      std::cerr << "cannot read " << o.config << "\n";
      return std::nullopt;
    }
    try {
      run = service::parse_run_config(json::parse(in));
    } catch (const json::parse_error& e) {
      std::cerr << o.config << ": " << e.what() << "\n";
      return std::nullopt;
    } catch (const service::ConfigError& e) {
      print(e.diagnostics());
      return std::nullopt;
    }
  }
  if (o.seed_given) run.seed = o.seed;
  return run;
}

// Loads, gates and builds; prints diagnostics on the way.
std::optional<service::Artifact> build(const Options& o) {
  auto spec = load(o);
  if (!spec) return std::nullopt;
  auto g = service::gate(*spec);
  if (!g.ok) {
    Diagnostics errs;
    for (const auto& d : g.report.diagnostics)
      if (d.severity == Severity::error) errs.push_back(d);
    print(errs);
    return std::nullopt;
  }
  auto run = load_config(o);
  if (!run) return std::nullopt;
  try {
    return service::build_artifact(g.report.expanded, *run);
  } catch (const service::ConfigError& e) {
    print(e.diagnostics());
  } catch (const compiler::CompileError& e) {
    print(e.diagnostics());
  } catch (const solver::FlatModelError& e) {
    std::cerr << e.what() << "\n";
  }
  return std::nullopt;
}

int cmd_validate(const Options& o) {
  auto spec = load(o);
  if (!spec) return kDiagnostics;
  auto report = validator::validate(*spec);
  print(report.diagnostics);
  std::size_t errors = count_errors(report.diagnostics);
  std::cout << o.spec << ": " << errors << " error(s), " << report.diagnostics.size() - errors << " warning(s)\n";
  for (const auto& g : report.expansion.needs_probability) {
    std::cout << "shared-state group:";
    for (int r : g) std::cout << " " << r;
    std::cout << "\n";
  }
  return errors ? kDiagnostics : kOk;
}

int cmd_expand(const Options& o) {
  auto spec = load(o);
  if (!spec) return kDiagnostics;
  auto report = validator::validate(*spec);
  if (!write_output(o.out, task::save_spec(report.expanded))) return kDiagnostics;
  std::cerr << report.expansion.expanded_rows.size() << " rows after expansion"
            << (report.expansion.changed ? "" : " (unchanged)") << "\n";
  for (const auto& g : report.expansion.needs_probability) {
    std::cerr << "group needing probabilities:";
    for (int r : g) std::cerr << " " << r;
    std::cerr << "\n";
  }
  print(report.diagnostics);
  return has_errors(report.diagnostics) ? kDiagnostics : kOk;
}

void print_summary(const service::Artifact& a) {
  const auto s = service::summary(a);
  std::cerr << "states " << s["summary"]["flat_states"] << ", actions " << s["summary"]["actions"] << ", sensors "
            << s["summary"]["sensors"] << ", observations " << s["summary"]["observations"] << "\n";
  const auto& p = s["policy"];
  std::cerr << p["kind"].get<std::string>() << ": " << p["iterations"] << " iterations, residual "
            << p["residual"].get<double>() << (p["converged"].get<bool>() ? ", converged" : ", not converged") << ", "
            << p["vectors"] << " vectors\n";
}

int cmd_compile(const Options& o) {
  auto spec = load(o);
  if (!spec) return kDiagnostics;
  auto g = service::gate(*spec);
  if (!g.ok) {
    for (const auto& d : g.report.diagnostics)
      if (d.severity == Severity::error) std::cerr << format(d) << "\n";
    return kDiagnostics;
  }
  auto run = load_config(o);
  if (!run) return kDiagnostics;
  try {
    auto model = compiler::compile(g.report.expanded, service::effective_model_config(g.report.expanded.config, *run));
    std::cerr << "states " << model.flat_state_count() << ", actions " << model.actions.size() << ", sensors "
              << model.spec.sensors.size() << ", observations " << model.observation_count() << "\n";
    return write_output(o.out, compiler::emit_model(model)) ? kOk : kDiagnostics;
  } catch (const service::ConfigError& e) {
    print(e.diagnostics());
  } catch (const compiler::CompileError& e) {
    print(e.diagnostics());
  }
  return kDiagnostics;
}

int cmd_solve(const Options& o) {
  auto a = build(o);
  if (!a) return kDiagnostics;
  print_summary(*a);
  const auto& e = a->engine;
  std::cerr << "at the initial belief:\n"
            << solver::format_action_values(solver::action_values(*e.policy, e.flat->initial_belief()));
  return write_output(o.out, solver::save_policy(*e.policy)) ? kOk : kDiagnostics;
}

// Interactive lines: `<action> sensor=reading ...`, `trace`, `values`, `quit`.
int interactive(const service::Artifact& a, const Options& o) {
  sim::Session s(a.engine);
  const auto& spec = a.engine.model->spec;
  auto show = [&] {
    const auto& r = s.last();
    std::cout << "step " << r.index << "  P(goal) " << r.goal_probability << "  recommended " << r.recommended << "\n";
  };
  std::cout << "actions:";
  for (const auto& x : a.engine.model->actions) std::cout << " " << x.name;
  std::cout << "\nsensors:";
  for (const auto& x : spec.sensors) {
    std::cout << " " << x.name << "{";
    for (std::size_t i = 0; i < x.readings.size(); ++i) std::cout << (i ? "," : "") << x.readings[i];
    std::cout << "}";
  }
  std::cout << "\n";
  std::cout << solver::format_action_values(s.last().action_values);
  show();
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    std::istringstream in(line);
    std::string action;
    if (!(in >> action)) continue;
    if (action == "quit" || action == "exit") break;
    if (action == "trace") {
      std::cout << sim::trace_table(s.trace());
      continue;
    }
    if (action == "values") {
      std::cout << solver::format_action_values(s.last().action_values);
      continue;
    }
    std::map<std::string, std::string> readings;
    std::string kv;
    bool ok = true;
    while (in >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cout << "expected sensor=reading, got '" << kv << "'\n";
        ok = false;
        break;
      }
      readings[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (!ok) continue;
    try {
      s.step(action, readings);
    } catch (const sim::SimulationError& e) {
      std::cout << e.code() << ": " << e.what() << "\n";
      continue;
    }
    std::cout << solver::format_action_values(s.last().action_values);
    show();
  }
  if (!o.out.empty()) write_output(o.out, sim::trace_json(s.trace()));
  return kOk;
}

int cmd_simulate(const Options& o) {
  auto a = build(o);
  if (!a) return kDiagnostics;
  if (o.interactive) return interactive(*a, o);
  const auto& spec = a->engine.model->spec;
  sim::ClientProfile profile;
  if (o.profile == "forgetful") profile = sim::forgetful_compliant(spec);
  else if (o.profile == "able") profile = sim::fully_able(spec);
  else {
    std::cerr << "unknown profile '" << o.profile << "' (forgetful or able)\n";
    return kUsage;
  }
  auto ep = sim::run_episode(a->engine, profile, o.steps, o.seed);
  std::string text = o.trace_format == "json" ? sim::trace_json(ep.trace) : sim::trace_table(ep.trace);
  if (!write_output(o.out, text)) return kDiagnostics;
  std::cerr << (ep.reached_goal ? "goal reached" : "goal not reached") << " after " << (ep.trace.empty() ? 0 : ep.trace.size() - 1)
            << " steps; prompts:";
  for (const auto& p : ep.prompts) std::cerr << " " << p;
  std::cerr << "\n";
  return kOk;
}

int cmd_serve(const Options& o) {
  service::Service svc(o.store);
  service::HttpServer server(svc);
  std::cerr << "serving on http://" << o.host << ":" << o.port << " (store " << o.store << ")\n";
  if (!server.run(o.host, o.port)) {
    std::cerr << "cannot bind " << o.host << ":" << o.port << "\n";
    return kDiagnostics;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task specification to POMDP compiler, solver and simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_spec = [&](CLI::App* c) { c->add_option("--spec", o.spec, "Task specification (JSON)")->required(); };
  auto add_run = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Run configuration (JSON)");
    c->add_option("--seed", o.seed, "Random seed")->each([&](const std::string&) { o.seed_given = true; });
  };

  auto* validate = app.add_subcommand("validate", "Check a specification and list its diagnostics");
  add_spec(validate);
  auto* expand = app.add_subcommand("expand", "Split overlapping IU rows and write the expanded specification");
  add_spec(expand);
  expand->add_option("--out", o.out, "Output file (default stdout)");
  auto* compile = app.add_subcommand("compile", "Write the compiled model file");
  add_spec(compile);
  add_run(compile);
  compile->add_option("--out", o.out, "Output file (default stdout)");
  auto* solve = app.add_subcommand("solve", "Solve the model and write the policy");
  add_spec(solve);
  add_run(solve);
  solve->add_option("--out", o.out, "Output file (default stdout)");
  auto* simulate = app.add_subcommand("simulate", "Run a scripted client or an interactive session");
  add_spec(simulate);
  add_run(simulate);
  simulate->add_flag("--interactive", o.interactive, "Read actions and readings from stdin");
  simulate->add_option("--profile", o.profile, "Scripted client: forgetful or able")->check(CLI::IsMember({"forgetful", "able"}));
  simulate->add_option("--steps", o.steps, "Maximum steps")->check(CLI::NonNegativeNumber);
  simulate->add_option("--format", o.trace_format, "Trace format: table or json")->check(CLI::IsMember({"table", "json"}));
  simulate->add_option("--out", o.out, "Trace output file (default stdout)");
  auto* serve = app.add_subcommand("serve", "Serve the HTTP endpoints");
  serve->add_option("--port", o.port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", o.host, "Address to bind");
  serve->add_option("--store", o.store, "Directory holding the stored specifications");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (validate->parsed()) return cmd_validate(o);
  if (expand->parsed()) return cmd_expand(o);
  if (compile->parsed()) return cmd_compile(o);
  if (solve->parsed()) return cmd_solve(o);
  if (simulate->parsed()) return cmd_simulate(o);
  if (serve->parsed()) return cmd_serve(o);
  return kUsage;
}
