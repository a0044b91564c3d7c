#include "snap/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace snap::service {

json to_json(const Diagnostic& d) {
  return {{"severity", d.severity == Severity::error ? "error" : "warning"},
          {"code", d.code},
          {"path", d.path},
          {"message", d.message},
          {"rows", d.involved_rows}};
}

json to_json(const Diagnostics& ds) {
  json out = json::array();
  for (const auto& d : ds) out.push_back(to_json(d));
  return out;
}

ConfigError::ConfigError(Diagnostics ds)
    : std::runtime_error(ds.empty() ? "invalid configuration" : format(ds.front())), ds_(std::move(ds)) {}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

const std::set<std::string> kModelKeys{"rho", "kappa", "other_noise", "discount", "horizon"};
const std::set<std::string> kSolverKeys{"kind",      "beliefs",    "trajectory_length", "iterations",
                                        "tolerance", "time_limit", "seed"};

[[noreturn]] void config_fail(const std::string& path, const std::string& msg) {
  throw ConfigError({error("invalid_config", path, msg)});
}

double number_at(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_number()) config_fail(path + "." + key, "expected a number");
  return j.get<double>();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

json model_config_json(const task::ModelConfig& c) {
  return {{"rho", c.rho},
          {"kappa", c.kappa},
          {"other_noise", c.other_noise},
          {"discount", c.discount},
          {"horizon", c.horizon ? json(*c.horizon) : json(nullptr)}};
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) config_fail("", "expected an object");
  for (const auto& [k, _] : j.items())
    if (k != "model" && k != "solver") config_fail(k, "unknown key");
  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) config_fail("model", "expected an object");
    for (const auto& [k, v] : m.items()) {
      if (!kModelKeys.count(k)) config_fail("model." + k, "unknown key");
      if (k == "horizon") {
        if (!v.is_null() && !v.is_number_integer()) config_fail("model.horizon", "expected an integer or null");
      } else {
        number_at(v, k, "model");
      }
    }
    c.model_overrides = m;
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    if (!s.is_object()) config_fail("solver", "expected an object");
    for (const auto& [k, v] : s.items()) {
      if (!kSolverKeys.count(k)) config_fail("solver." + k, "unknown key");
      if (k == "kind") {
        if (!v.is_string() || (v != "qmdp" && v != "pbvi")) config_fail("solver.kind", "expected \"qmdp\" or \"pbvi\"");
        c.kind = v == "qmdp" ? solver::PolicyKind::qmdp : solver::PolicyKind::pbvi;
        continue;
      }
      double x = number_at(v, k, "solver");
      if (k == "tolerance") {
        if (!(x > 0.0)) config_fail("solver.tolerance", "must be positive");
        c.tolerance = x;
      } else if (k == "time_limit") {
        if (!(x >= 0.0)) config_fail("solver.time_limit", "must be nonnegative");
        c.time_limit = x;
      } else {
        if (!v.is_number_integer() || x < 0) config_fail("solver." + k, "expected a nonnegative integer");
        if (k == "beliefs") c.belief_count = v.get<std::size_t>();
        if (k == "trajectory_length") c.trajectory_length = v.get<std::size_t>();
        if (k == "iterations") c.iterations = v.get<int>();
        if (k == "seed") c.seed = v.get<std::uint64_t>();
      }
    }
    if (c.belief_count == 0) config_fail("solver.beliefs", "must be positive");
  }
  return c;
}

json to_json(const RunConfig& c) {
  json s = {{"kind", std::string(solver::kind_name(c.kind))}};
  if (c.kind == solver::PolicyKind::pbvi) {
    s["beliefs"] = c.belief_count;
    s["trajectory_length"] = c.trajectory_length;
    s["iterations"] = c.iterations;
    s["tolerance"] = c.tolerance;
    s["time_limit"] = c.time_limit;
    s["seed"] = c.seed;
  }
  return {{"model", c.model_overrides}, {"solver", s}};
}

task::ModelConfig effective_model_config(const task::ModelConfig& base, const RunConfig& c) {
  task::ModelConfig m = base;
  for (const auto& [k, v] : c.model_overrides.items()) {
    if (k == "rho") m.rho = v.get<double>();
    if (k == "kappa") m.kappa = v.get<double>();
    if (k == "other_noise") m.other_noise = v.get<double>();
    if (k == "discount") m.discount = v.get<double>();
    if (k == "horizon") m.horizon = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
  }
  Diagnostics ds;
  if (!(m.rho >= 0.0 && m.rho <= 1.0)) ds.push_back(error("invalid_config", "model.rho", "must lie in [0, 1]"));
  if (!(m.kappa >= 0.0)) ds.push_back(error("invalid_config", "model.kappa", "must be nonnegative"));
  if (!(m.other_noise >= 0.0 && m.other_noise <= 1.0))
    ds.push_back(error("invalid_config", "model.other_noise", "must lie in [0, 1]"));
  if (!(m.discount > 0.0 && m.discount < 1.0))
    ds.push_back(error("invalid_config", "model.discount", "must lie in (0, 1)"));
  if (m.horizon && *m.horizon <= 0) ds.push_back(error("invalid_config", "model.horizon", "must be positive"));
  if (!ds.empty()) throw ConfigError(std::move(ds));
  return m;
}

std::string config_hash(const task::ModelConfig& model, const RunConfig& c) {
  json j = to_json(c);
  j["model"] = model_config_json(model);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

GateResult gate(const task::SpecDocument& spec) {
  GateResult g;
  g.report = validator::validate(spec);
  g.ok = !has_errors(g.report.diagnostics);
  return g;
}

Artifact build_artifact(const task::SpecDocument& expanded, const RunConfig& run,
                        const std::function<bool()>& cancelled) {
  Artifact a;
  a.run = run;
  a.model_config = effective_model_config(expanded.config, run);
  a.spec_id = expanded.metadata.id;
  a.revision = expanded.metadata.revision;
  a.key = a.spec_id + "-r" + std::to_string(a.revision) + "-" + config_hash(a.model_config, run);

  const auto t0 = std::chrono::steady_clock::now();
  a.engine = sim::make_engine(compiler::compile(expanded, a.model_config));
  a.compile_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto& flat = *a.engine.flat;
  if (run.kind == solver::PolicyKind::qmdp) {
    solver::QmdpOptions o;
    o.horizon = a.model_config.horizon;
    o.cancelled = cancelled;
    a.engine.policy = std::make_shared<solver::Policy>(solver::solve_qmdp(flat, o));
  } else {
    solver::PbviOptions o;
    o.belief_count = run.belief_count;
    o.trajectory_length = run.trajectory_length;
    o.max_iterations = run.iterations;
    o.tolerance = run.tolerance;
    o.time_limit_seconds = run.time_limit;
    o.seed = run.seed;
    o.horizon = a.model_config.horizon;
    o.cancelled = cancelled;
    auto beliefs = solver::sample_beliefs(flat, flat.initial_belief(), run.belief_count, run.trajectory_length, run.seed);
    a.engine.policy = std::make_shared<solver::Policy>(solver::solve_pbvi(flat, std::move(beliefs), o));
  }
  return a;
}

json summary(const Artifact& a) {
  const auto& m = *a.engine.model;
  const auto& p = *a.engine.policy;
  json cfg = to_json(a.run);
  cfg["model"] = model_config_json(a.model_config);
  return {{"key", a.key},
          {"spec", a.spec_id},
          {"revision", a.revision},
          {"config_hash", config_hash(a.model_config, a.run)},
          {"config", cfg},
          {"summary",
           {{"flat_states", m.flat_state_count()},
            {"actions", m.actions.size()},
            {"sensors", m.spec.sensors.size()},
            {"observations", m.observation_count()},
            {"task_states", task::task_state_count(m.spec)},
            {"behaviour_values", m.behaviour_count()},
            {"abilities", m.spec.abilities.size()}}},
          {"policy",
           {{"kind", std::string(solver::kind_name(p.kind))},
            {"iterations", p.stats.iterations},
            {"residual", p.stats.residual},
            {"converged", p.stats.converged},
            {"seconds", p.stats.seconds},
            {"vectors", p.alphas.size()}}},
          {"compile_seconds", a.compile_seconds}};
}

// ---------------------------------------------------------------------------
// Service

namespace {

Response reply(const json& j, int status = 200) { return {status, j.dump(2) + "\n", "application/json"}; }

Response fail(int status, const std::string& code, const std::string& message, const Diagnostics& ds = {}) {
  json j = {{"error", {{"code", code}, {"message", message}}}};
  if (!ds.empty()) j["diagnostics"] = to_json(ds);
  return reply(j, status);
}

Response store_failure(const task::StoreError& e) {
  switch (e.kind()) {
    case task::StoreError::Kind::not_found: return fail(404, "not_found", e.what());
    case task::StoreError::Kind::conflict: return fail(409, "conflict", e.what());
    case task::StoreError::Kind::invalid: return fail(400, "invalid", e.what());
    case task::StoreError::Kind::io: break;
  }
  return fail(500, "io_error", e.what());
}

std::optional<json> parse_body(const Request& r, Response& err) {
  if (r.body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(r.body);
  } catch (const json::parse_error& e) {
    err = fail(400, "invalid_json", e.what());
    return std::nullopt;
  }
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

json rows_json(const task::SpecDocument& spec, const std::vector<task::IURow>& rows) {
  return json::parse(task::save_spec(validator::with_rows(spec, rows)))["iu_rows"];
}

Diagnostics errors_only(const Diagnostics& ds) {
  Diagnostics out;
  for (const auto& d : ds)
    if (d.severity == Severity::error) out.push_back(d);
  return out;
}

}  // namespace

Service::Service(std::filesystem::path store_dir) : store_(std::move(store_dir)) {}

Service::~Service() {
  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard g(mu_);
    for (auto& [_, j] : jobs_) jobs.push_back(j);
  }
  for (auto& j : jobs) {
    j->cancel = true;
    if (j->worker.joinable()) j->worker.join();
  }
}

void Service::wait_for_job(const std::string& id) {
  std::shared_ptr<Job> j;
  {
    std::lock_guard g(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return;
    j = it->second;
  }
  while (true) {
    {
      std::lock_guard g(j->mu);
      if (j->status != "running") return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

Response Service::handle(const Request& r) {
  const auto p = split_path(r.path);
  const std::string& m = r.method;
  try {
    if (p.size() == 1 && p[0] == "specs") {
      if (m == "GET") return list_specs();
      if (m == "POST") return create_spec(r);
    } else if (p.size() == 2 && p[0] == "specs") {
      if (m == "GET") return read_spec(p[1]);
      if (m == "PUT") return update_spec(p[1], r);
      if (m == "DELETE") return delete_spec(p[1]);
    } else if (p.size() == 3 && p[0] == "specs") {
      if (p[2] == "validate" && m == "POST") return validate_spec(p[1]);
      if (p[2] == "probabilities" && m == "POST") return submit_probabilities(p[1], r);
      if (p[2] == "compile" && m == "POST") return compile_spec(p[1], r);
      if (p[2] == "model" && m == "GET") return model_text(p[1], r);
      if (p[2] == "policy" && m == "GET") return policy_text(p[1], r);
      if (p[2] == "sessions" && m == "POST") return create_session(p[1], r);
      if (p[2] != "validate" && p[2] != "probabilities" && p[2] != "compile" && p[2] != "model" &&
          p[2] != "policy" && p[2] != "sessions")
        return fail(404, "not_found", "no route " + r.path);
    } else if (p.size() == 2 && p[0] == "sessions") {
      if (m == "DELETE") return close_session(p[1]);
    } else if (p.size() == 3 && p[0] == "sessions") {
      if (p[2] == "step" && m == "POST") return step_session(p[1], r);
      if (p[2] == "trace" && m == "GET") return session_trace(p[1]);
      if (p[2] == "close" && m == "POST") return close_session(p[1]);
      if (p[2] != "step" && p[2] != "trace" && p[2] != "close") return fail(404, "not_found", "no route " + r.path);
    } else if (p.size() == 2 && p[0] == "jobs") {
      if (m == "GET") return job_status(p[1]);
      if (m == "DELETE") return cancel_job(p[1]);
    } else {
      return fail(404, "not_found", "no route " + r.path);
    }
    return fail(405, "method_not_allowed", m + " is not allowed on " + r.path);
  } catch (const task::StoreError& e) {
    return store_failure(e);
  } catch (const ConfigError& e) {
    return fail(400, "invalid_config", e.what(), e.diagnostics());
  } catch (const json::exception& e) {
    return fail(400, "invalid_request", e.what());
  }
}

Response Service::list_specs() {
  json ids = json::array();
  for (const auto& id : store_.list()) ids.push_back(id);
  return reply({{"specs", ids}});
}

Response Service::create_spec(const Request& r) {
  auto res = task::load_spec(r.body);
  if (!res.spec) return fail(400, "invalid_spec", "the spec does not load", res.diagnostics);
  auto doc = store_.create(*res.spec);
  return reply({{"id", doc.metadata.id}, {"revision", doc.metadata.revision}, {"diagnostics", to_json(res.diagnostics)}},
               201);
}

Response Service::read_spec(const std::string& id) { return {200, store_.read_text(id), "application/json"}; }

Response Service::update_spec(const std::string& id, const Request& r) {
  auto res = task::load_spec(r.body);
  if (!res.spec) return fail(400, "invalid_spec", "the spec does not load", res.diagnostics);
  auto doc = *res.spec;
  if (doc.metadata.id.empty()) doc.metadata.id = id;
  if (doc.metadata.id != id) return fail(400, "id_mismatch", "metadata.id does not match the path");
  try {
    doc = store_.update(doc);
  } catch (const task::StoreError& e) {
    if (e.kind() == task::StoreError::Kind::conflict) return fail(409, "stale_revision", e.what());
    throw;
  }
  {
    std::lock_guard g(mu_);
    latest_.erase(id);
    pending_.erase(id);
  }
  return reply({{"id", id}, {"revision", doc.metadata.revision}, {"diagnostics", to_json(res.diagnostics)}});
}

Response Service::delete_spec(const std::string& id) {
  store_.remove(id);
  std::lock_guard g(mu_);
  latest_.erase(id);
  pending_.erase(id);
  for (auto it = artifacts_.begin(); it != artifacts_.end();)
    it = it->second->spec_id == id ? artifacts_.erase(it) : std::next(it);
  return reply({{"id", id}, {"deleted", true}});
}

Response Service::validate_spec(const std::string& id) {
  auto spec = store_.read(id);
  auto report = validator::validate(spec);
  {
    std::lock_guard g(mu_);
    pending_[id] = report.expansion.needs_probability;
  }
  return reply({{"id", id},
                {"revision", spec.metadata.revision},
                {"errors", count_errors(report.diagnostics)},
                {"diagnostics", to_json(report.diagnostics)},
                {"expansion",
                 {{"changed", report.expansion.changed},
                  {"rows", rows_json(spec, report.expansion.expanded_rows)},
                  {"needs_probability", report.expansion.needs_probability}}}});
}

Response Service::submit_probabilities(const std::string& id, const Request& r) {
  Response err;
  auto body = parse_body(r, err);
  if (!body) return err;
  if (!body->is_object() || !body->contains("groups") || !(*body)["groups"].is_array())
    return fail(400, "invalid_request", "expected {\"groups\": [{\"rows\": [...], \"probabilities\": [...]}]}");

  auto spec = store_.read(id);
  auto report = validator::validate(spec);
  const auto& groups = report.expansion.needs_probability;
  if (groups.empty()) return fail(409, "no_pending_groups", "the spec has no shared-state groups needing probabilities");
  auto rows = report.expansion.expanded_rows;

  Diagnostics ds;
  std::map<int, double> assigned;
  const auto& submitted = (*body)["groups"];
  for (std::size_t g = 0; g < submitted.size(); ++g) {
    const json& e = submitted[g];
    const std::string path = "groups[" + std::to_string(g) + "]";
    if (!e.is_object() || !e.contains("rows") || !e.contains("probabilities") || !e["rows"].is_array() ||
        !e["probabilities"].is_array()) {
      ds.push_back(error("invalid_request", path, "expected rows and probabilities arrays"));
      continue;
    }
    std::vector<int> ids;
    for (const auto& x : e["rows"]) {
      if (!x.is_number_integer()) break;
      ids.push_back(x.get<int>());
    }
    std::vector<int> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    auto match = std::find_if(groups.begin(), groups.end(), [&](std::vector<int> gr) {
      std::sort(gr.begin(), gr.end());
      return gr == sorted;
    });
    if (ids.size() != e["rows"].size() || match == groups.end()) {
      ds.push_back(error("unknown_group", path + ".rows", "rows do not form a pending group", ids));
      continue;
    }
    const json& probs = e["probabilities"];
    if (probs.size() != ids.size()) {
      ds.push_back(error("invalid_probability", path + ".probabilities", "one probability per row is required", ids));
      continue;
    }
    double sum = 0.0;
    bool bad = false;
    for (const auto& x : probs) {
      if (!x.is_number() || !std::isfinite(x.get<double>()) || x.get<double>() < 0.0 || x.get<double>() > 1.0) bad = true;
      else sum += x.get<double>();
    }
    if (bad) {
      ds.push_back(error("invalid_probability", path + ".probabilities", "probabilities must lie in [0, 1]", ids));
      continue;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "probabilities sum to %.9g, not 1", sum);
      ds.push_back(error("group_not_normalized", path + ".probabilities", buf, ids));
      continue;
    }
    for (std::size_t i = 0; i < ids.size(); ++i) assigned[ids[i]] = probs[i].get<double>();
  }
  if (!ds.empty()) return fail(400, ds.front().code, "probabilities rejected", ds);

  for (auto& row : rows)
    if (auto it = assigned.find(row.index); it != assigned.end()) row.probability = it->second;
  auto next = validator::with_rows(spec, rows);
  bool changed = task::save_spec(next) != task::save_spec(spec);
  if (changed) {
    if (body->contains("revision") && (*body)["revision"] != spec.metadata.revision)
      return fail(409, "stale_revision", "stale revision; stored revision is " + std::to_string(spec.metadata.revision));
    try {
      next = store_.update(next);
    } catch (const task::StoreError& e) {
      if (e.kind() == task::StoreError::Kind::conflict) return fail(409, "stale_revision", e.what());
      throw;
    }
  }
  auto after = validator::validate(next);
  std::vector<std::vector<int>> unresolved;
  for (const auto& d : after.diagnostics)
    if (d.severity == Severity::error && (d.code == "probability_missing" || d.code == "group_not_normalized"))
      unresolved.push_back(d.involved_rows);
  {
    std::lock_guard g(mu_);
    pending_[id] = after.expansion.needs_probability;
    if (changed) latest_.erase(id);
  }
  return reply({{"id", id},
                {"revision", next.metadata.revision},
                {"changed", changed},
                {"unresolved", unresolved},
                {"diagnostics", to_json(after.diagnostics)}});
}

std::optional<task::SpecDocument> Service::load_gated(const std::string& id, Response& err,
                                                      validator::Report* report) {
  auto spec = store_.read(id);
  auto g = gate(spec);
  if (!g.ok) {
    auto errs = errors_only(g.report.diagnostics);
    bool probs = std::any_of(errs.begin(), errs.end(), [](const Diagnostic& d) {
      return d.code == "probability_missing" || d.code == "group_not_normalized";
    });
    err = probs ? fail(422, "probabilities_unresolved", "shared-state groups need probabilities before compiling", errs)
                : fail(422, "validation_failed", "validation errors must be resolved before compiling", errs);
    return std::nullopt;
  }
  if (report) *report = g.report;
  return g.report.expanded;
}

json Service::run_compile(const std::string& id, const task::SpecDocument& expanded, const RunConfig& run,
                          int revision, const std::function<bool()>& cancelled) {
  auto a = std::make_shared<Artifact>(build_artifact(expanded, run, cancelled));
  json out = summary(*a);
  out["cached"] = false;
  std::lock_guard g(mu_);
  // A newer revision may have been saved while this one solved.
  if (store_.read(id).metadata.revision == revision) latest_[id] = a->key;
  artifacts_[a->key] = std::move(a);
  return out;
}

Response Service::compile_spec(const std::string& id, const Request& r) {
  Response err;
  auto body = parse_body(r, err);
  if (!body) return err;
  if (!body->is_object()) return fail(400, "invalid_request", "expected an object");
  bool async = false;
  json cfg = *body;
  if (cfg.contains("async")) {
    if (!cfg["async"].is_boolean()) return fail(400, "invalid_request", "async must be a boolean");
    async = cfg["async"].get<bool>();
    cfg.erase("async");
  }
  RunConfig run = parse_run_config(cfg);
  auto expanded = load_gated(id, err, nullptr);
  if (!expanded) return err;
  auto model_cfg = effective_model_config(expanded->config, run);
  const std::string key =
      id + "-r" + std::to_string(expanded->metadata.revision) + "-" + config_hash(model_cfg, run);
  {
    std::lock_guard g(mu_);
    if (auto it = artifacts_.find(key); it != artifacts_.end()) {
      latest_[id] = key;
      json out = summary(*it->second);
      out["cached"] = true;
      return reply(out);
    }
  }
  const int revision = expanded->metadata.revision;
  if (!async) {
    try {
      return reply(run_compile(id, *expanded, run, revision, {}));
    } catch (const compiler::CompileError& e) {
      return fail(422, "compile_failed", e.what(), e.diagnostics());
    } catch (const solver::FlatModelError& e) {
      return fail(422, "model_too_large", e.what());
    }
  }

  auto job = std::make_shared<Job>();
  {
    std::lock_guard g(mu_);
    job->id = "job-" + std::to_string(next_job_++);
    job->spec_id = id;
    jobs_[job->id] = job;
  }
  Job* jp = job.get();
  job->worker = std::thread([this, jp, id, run, revision, spec = *expanded] {
    std::string status = "done";
    json result;
    try {
      result = run_compile(id, spec, run, revision, [jp] { return jp->cancel.load(); });
    } catch (const solver::SolveCancelled&) {
      status = "cancelled";
    } catch (const compiler::CompileError& e) {
      status = "failed";
      result = {{"error", {{"code", "compile_failed"}, {"message", e.what()}}}, {"diagnostics", to_json(e.diagnostics())}};
    } catch (const std::exception& e) {
      status = "failed";
      result = {{"error", {{"code", "solve_failed"}, {"message", e.what()}}}};
    }
    std::lock_guard g(jp->mu);
    jp->status = status;
    jp->result = std::move(result);
  });
  return reply({{"job", job->id}, {"status", "running"}}, 202);
}

Response Service::job_status(const std::string& id) {
  std::shared_ptr<Job> j;
  {
    std::lock_guard g(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return fail(404, "unknown_job", "no job '" + id + "'");
    j = it->second;
  }
  std::lock_guard g(j->mu);
  json out = {{"job", id}, {"spec", j->spec_id}, {"status", j->status}};
  if (!j->result.is_null()) out["result"] = j->result;
  return reply(out);
}

Response Service::cancel_job(const std::string& id) {
  std::shared_ptr<Job> j;
  {
    std::lock_guard g(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) return fail(404, "unknown_job", "no job '" + id + "'");
    j = it->second;
  }
  j->cancel = true;
  if (j->worker.joinable()) j->worker.join();
  std::lock_guard g(j->mu);
  return reply({{"job", id}, {"status", j->status}});
}

std::shared_ptr<const Artifact> Service::find_artifact(const std::string& spec_id, const Request& r, Response& err) {
  auto current = store_.read(spec_id).metadata.revision;
  std::string key;
  if (auto it = r.query.find("key"); it != r.query.end()) key = it->second;
  std::lock_guard g(mu_);
  if (key.empty()) {
    auto it = latest_.find(spec_id);
    if (it == latest_.end()) {
      err = fail(409, "not_compiled", "compile the spec at its current revision first");
      return nullptr;
    }
    key = it->second;
  }
  auto it = artifacts_.find(key);
  if (it == artifacts_.end() || it->second->spec_id != spec_id) {
    err = fail(404, "unknown_model", "no compiled model '" + key + "' for spec '" + spec_id + "'");
    return nullptr;
  }
  if (it->second->revision != current) {
    err = fail(409, "stale_model", "the model was compiled from revision " + std::to_string(it->second->revision) +
                                       "; the spec is at revision " + std::to_string(current));
    return nullptr;
  }
  return it->second;
}

Response Service::model_text(const std::string& id, const Request& r) {
  Response err;
  auto a = find_artifact(id, r, err);
  if (!a) return err;
  return {200, compiler::emit_model(*a->engine.model), "text/plain"};
}

Response Service::policy_text(const std::string& id, const Request& r) {
  Response err;
  auto a = find_artifact(id, r, err);
  if (!a) return err;
  return {200, solver::save_policy(*a->engine.policy), "text/plain"};
}

Response Service::create_session(const std::string& id, const Request& r) {
  Response err;
  auto body = parse_body(r, err);
  if (!body) return err;
  if (!body->is_object()) return fail(400, "invalid_request", "expected an object");
  Request lookup = r;
  if (body->contains("key")) {
    if (!(*body)["key"].is_string()) return fail(400, "invalid_request", "key must be a string");
    lookup.query["key"] = (*body)["key"].get<std::string>();
  }
  auto a = find_artifact(id, lookup, err);
  if (!a) return err;
  std::map<std::string, double> priors;
  if (body->contains("ability_priors")) {
    const json& p = (*body)["ability_priors"];
    if (!p.is_object()) return fail(400, "invalid_request", "ability_priors must map ability names to probabilities");
    for (const auto& [k, v] : p.items()) {
      if (!v.is_number()) return fail(400, "invalid_prior", "prior of '" + k + "' is not a number");
      priors[k] = v.get<double>();
    }
  }
  auto entry = std::make_shared<SessionEntry>();
  entry->spec_id = id;
  entry->key = a->key;
  try {
    entry->session = std::make_unique<sim::Session>(a->engine, sim::initial_belief(a->engine, priors));
  } catch (const sim::SimulationError& e) {
    return fail(400, e.code(), e.what());
  }
  std::string sid;
  {
    std::lock_guard g(mu_);
    sid = "session-" + std::to_string(next_session_++);
    sessions_[sid] = entry;
  }
  return reply({{"session", sid}, {"spec", id}, {"key", a->key}, {"step", sim::to_json(entry->session->last())}}, 201);
}

Response Service::step_session(const std::string& id, const Request& r) {
  Response err;
  auto body = parse_body(r, err);
  if (!body) return err;
  std::shared_ptr<SessionEntry> e;
  {
    std::lock_guard g(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return fail(404, "unknown_session", "no session '" + id + "'");
    e = it->second;
  }
  if (!body->is_object() || !body->contains("action") || !(*body)["action"].is_string())
    return fail(400, "invalid_request", "expected {\"action\": ..., \"observation\": {sensor: reading}}");
  std::map<std::string, std::string> readings;
  if (body->contains("observation")) {
    const json& o = (*body)["observation"];
    if (!o.is_object()) return fail(400, "invalid_request", "observation must map sensors to readings");
    for (const auto& [k, v] : o.items()) {
      if (!v.is_string()) return fail(400, "invalid_reading", "reading of '" + k + "' must be a string");
      readings[k] = v.get<std::string>();
    }
  }
  std::lock_guard g(e->mu);
  if (e->closed) return fail(409, "session_closed", "session '" + id + "' is closed");
  try {
    const auto& rec = e->session->step((*body)["action"].get<std::string>(), readings);
    return reply({{"session", id}, {"step", sim::to_json(rec)}});
  } catch (const sim::SimulationError& ex) {
    return fail(400, ex.code(), ex.what());
  }
}

Response Service::session_trace(const std::string& id) {
  std::shared_ptr<SessionEntry> e;
  {
    std::lock_guard g(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return fail(404, "unknown_session", "no session '" + id + "'");
    e = it->second;
  }
  std::lock_guard g(e->mu);
  json steps = json::array();
  for (const auto& rec : e->session->trace()) steps.push_back(sim::to_json(rec));
  return reply({{"session", id}, {"spec", e->spec_id}, {"key", e->key}, {"closed", e->closed}, {"steps", steps}});
}

Response Service::close_session(const std::string& id) {
  std::shared_ptr<SessionEntry> e;
  {
    std::lock_guard g(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return fail(404, "unknown_session", "no session '" + id + "'");
    e = it->second;
  }
  std::lock_guard g(e->mu);
  e->closed = true;
  return reply({{"session", id}, {"closed", true}});
}

}  // namespace snap::service
