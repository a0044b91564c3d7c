#pragma once

// The designer loop behind the HTTP endpoints and the CLI: spec storage,
// validation and probability entry, compile+solve with a per-config cache,
// and simulation sessions.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "snap/compiler.hpp"
#include "snap/diagnostic.hpp"
#include "snap/simulator.hpp"
#include "snap/solver.hpp"
#include "snap/task_model.hpp"
#include "snap/validator.hpp"

namespace snap::service {

using nlohmann::json;

json to_json(const Diagnostic& d);
json to_json(const Diagnostics& ds);

// Solver and model overrides, as read from a --config file or a compile
// request body:
//   {"model": {"rho", "kappa", "other_noise", "discount", "horizon"},
//    "solver": {"kind": "qmdp"|"pbvi", "beliefs", "trajectory_length",
//               "iterations", "tolerance", "time_limit", "seed"}}
struct RunConfig {
  json model_overrides = json::object();
  solver::PolicyKind kind = solver::PolicyKind::qmdp;
  std::size_t belief_count = 256;
  std::size_t trajectory_length = 30;
  int iterations = 60;
  double tolerance = 1e-4;
  double time_limit = 0.0;
  std::uint64_t seed = 1;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(Diagnostics ds);
  const Diagnostics& diagnostics() const { return ds_; }

 private:
  Diagnostics ds_;
};

// Throws ConfigError on unknown keys or bad values.
RunConfig parse_run_config(const json& j);
json to_json(const RunConfig& c);
// spec.config with the overrides applied; throws ConfigError.
task::ModelConfig effective_model_config(const task::ModelConfig& base, const RunConfig& c);
// Hex digest of the canonical JSON of the effective model config and solver settings.
std::string config_hash(const task::ModelConfig& model, const RunConfig& c);

// Validation with the workflow gate applied: the expanded spec when there are
// no errors.
struct GateResult {
  validator::Report report;
  bool ok = false;
};
GateResult gate(const task::SpecDocument& spec);

struct Artifact {
  std::string key;
  std::string spec_id;
  int revision = 0;
  task::ModelConfig model_config;
  RunConfig run;
  sim::Engine engine;
  double compile_seconds = 0.0;
};

// Compiles the (already gated, expanded) spec and solves it.
Artifact build_artifact(const task::SpecDocument& expanded, const RunConfig& run,
                        const std::function<bool()>& cancelled = {});
json summary(const Artifact& a);

struct Request {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> query;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class Service {
 public:
  // Specs live as JSON files under `store_dir`.
  explicit Service(std::filesystem::path store_dir);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& r);

  // Blocks until the job leaves the running state.
  void wait_for_job(const std::string& id);

 private:
  struct SessionEntry {
    std::mutex mu;
    std::string spec_id;
    std::string key;
    std::unique_ptr<sim::Session> session;
    bool closed = false;
  };
  struct Job {
    std::string id;
    std::string spec_id;
    std::atomic<bool> cancel{false};
    std::mutex mu;
    std::string status = "running";  // running | done | failed | cancelled
    json result;
    std::thread worker;
  };

  Response list_specs();
  Response create_spec(const Request& r);
  Response read_spec(const std::string& id);
  Response update_spec(const std::string& id, const Request& r);
  Response delete_spec(const std::string& id);
  Response validate_spec(const std::string& id);
  Response submit_probabilities(const std::string& id, const Request& r);
  Response compile_spec(const std::string& id, const Request& r);
  Response model_text(const std::string& id, const Request& r);
  Response policy_text(const std::string& id, const Request& r);
  Response create_session(const std::string& id, const Request& r);
  Response step_session(const std::string& id, const Request& r);
  Response session_trace(const std::string& id);
  Response close_session(const std::string& id);
  Response job_status(const std::string& id);
  Response cancel_job(const std::string& id);

  // The spec at its current revision, gated; the response is set on failure.
  std::optional<task::SpecDocument> load_gated(const std::string& id, Response& err, validator::Report* report);
  std::shared_ptr<const Artifact> find_artifact(const std::string& spec_id, const Request& r, Response& err);
  json run_compile(const std::string& id, const task::SpecDocument& expanded, const RunConfig& run, int revision,
                   const std::function<bool()>& cancelled);

  task::SpecStore store_;
  std::mutex mu_;  // guards the maps below
  std::map<std::string, std::shared_ptr<const Artifact>> artifacts_;  // by key
  std::map<std::string, std::string> latest_;                          // spec id -> key
  std::map<std::string, std::vector<std::vector<int>>> pending_;       // spec id -> groups
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::uint64_t next_session_ = 1;
  std::uint64_t next_job_ = 1;
};

// HTTP front end: every request is passed to Service::handle.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  // Serves on a background thread. Port 0 picks a free port. Returns the
  // bound port, or -1 when binding fails.
  int start(const std::string& host, int port);
  // Serves on the calling thread until stop(); false when binding fails.
  bool run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace snap::service
