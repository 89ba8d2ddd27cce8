// Command-line front end. Each subcommand mirrors one gateway endpoint and
// prints the same response document.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "policylab/http_server.hpp"

using namespace policylab;
using namespace policylab::gateway;

namespace {

struct Globals {
  std::string state = "state";
  std::string config = "config";
  std::string token;
  bool json = false;
  std::size_t threads = 1;
};

Json read_json_file(const std::string& path) { return parse_json(read_file(path), path); }

std::string read_source(const std::string& path) {
  try {
    return read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::SourceParseError, "cannot read source file " + path, path);
  }
}

void print(const Json& doc, bool json) {
  if (json) {
    std::cout << doc.dump() << "\n";
  } else {
    std::cout << doc.dump(2) << "\n";
  }
}

abac::SubjectAttrs authenticate(const Globals& g) {
  const auto tokens = load_tokens(std::filesystem::path(g.config) / "tokens.json");
  const auto it = tokens.find(g.token);
  if (g.token.empty() || it == tokens.end()) {
    throw Error(ErrorCode::Unauthenticated, "unknown or missing token (use --token or POLICYLAB_TOKEN)", "token");
  }
  return it->second;
}

Workbench open_workbench(const Globals& g) {
  WorkbenchOptions o;
  o.state_dir = g.state;
  o.config_dir = g.config;
  o.policy = abac::load_policy_file(std::filesystem::path(g.config) / "abac.json");
  o.run_workers = 1;
  o.sim_threads = g.threads;
  return Workbench(std::move(o));
}

int serve(const std::string& server_config, int port_override, const std::string& state_override) {
  auto cfg = load_server_config(server_config);
  if (port_override >= 0) cfg.port = port_override;
  if (!state_override.empty()) cfg.state_dir = state_override;

  // Signals are consumed by a dedicated thread so stop() runs outside a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  WorkbenchOptions o;
  o.state_dir = cfg.state_dir;
  o.config_dir = cfg.config_dir;
  o.policy = abac::load_policy_file(cfg.abac_file);
  o.run_workers = cfg.run_workers;
  o.sim_threads = cfg.sim_threads;
  Workbench workbench(std::move(o));
  HttpServer server(workbench, load_tokens(cfg.tokens_file));
  server.bind(cfg.host, cfg.port);
  std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy analytics workbench"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("POLICYLAB_TOKEN")) g.token = env;
  app.add_option("--state", g.state, "State directory")->capture_default_str();
  app.add_option("--config", g.config, "Configuration directory")->capture_default_str();
  app.add_option("--token", g.token, "Bearer token (defaults to $POLICYLAB_TOKEN)");
  app.add_flag("--json", g.json, "Compact machine-readable output");
  app.add_option("--threads", g.threads, "Simulation threads per policy run")->check(CLI::PositiveNumber);

  std::function<Json()> action;
  int serve_port = -1;
  std::string server_config = "config/server.json";

  auto* reg_fn = app.add_subcommand("register-function", "Register a function from a spec document");
  std::string file;
  reg_fn->add_option("--file", file, "Function spec (JSON)")->required()->check(CLI::ExistingFile);
  reg_fn->callback([&] {
    action = [&] { return open_workbench(g).register_function(authenticate(g), read_json_file(file)); };
  });

  auto* reg_ds = app.add_subcommand("register-dataset", "Register a dataset, optionally ingesting a source");
  std::string source;
  reg_ds->add_option("--file", file, "Dataset spec (JSON)")->required()->check(CLI::ExistingFile);
  reg_ds->add_option("--source", source, "NDJSON source ingested after registration (at_rest only)");
  reg_ds->callback([&] {
    action = [&] {
      auto body = read_json_file(file);
      if (!source.empty()) body["source"] = read_source(source);
      return open_workbench(g).register_dataset(authenticate(g), body);
    };
  });

  auto* list = app.add_subcommand("list", "List artifacts with their compliance documentation");
  std::string type, kind, name;
  list->add_option("--type", type, "function or dataset")->check(CLI::IsMember({"function", "dataset"}));
  list->add_option("--kind", kind, "ingest, analytic, stream or at_rest");
  list->add_option("--name", name, "Name substring");
  list->callback([&] {
    action = [&] {
      registry::ListFilter f;
      if (!type.empty()) f.type = type;
      if (!kind.empty()) f.kind = kind;
      if (!name.empty()) f.name_substring = name;
      return open_workbench(g).list(authenticate(g), f);
    };
  });

  std::string id;
  auto* show = app.add_subcommand("show", "Show one artifact");
  show->add_option("--id", id, "Artifact id")->required();
  show->callback([&] { action = [&] { return open_workbench(g).artifact(authenticate(g), id); }; });

  auto* update = app.add_subcommand("update", "Replace an artifact with a new version");
  update->add_option("--id", id, "Artifact id")->required();
  update->add_option("--file", file, "New spec (JSON)")->required()->check(CLI::ExistingFile);
  update->callback([&] {
    action = [&] { return open_workbench(g).update_artifact(authenticate(g), id, read_json_file(file)); };
  });

  auto* del = app.add_subcommand("delete", "Delete an artifact (datasets lose their records)");
  del->add_option("--id", id, "Artifact id")->required();
  del->callback([&] { action = [&] { return open_workbench(g).delete_artifact(authenticate(g), id); }; });

  std::string dataset;
  auto* ingest = app.add_subcommand("ingest", "Ingest an NDJSON source into an at-rest dataset");
  ingest->add_option("--dataset", dataset, "Dataset id")->required();
  ingest->add_option("--file", file, "NDJSON source")->required();
  ingest->callback([&] {
    action = [&] {
      const auto text = read_source(file);
      return open_workbench(g).ingest(authenticate(g), dataset, text);
    };
  });

  std::string record;
  auto* push = app.add_subcommand("push", "Push one record into a stream dataset");
  push->add_option("--dataset", dataset, "Dataset id")->required();
  push->add_option("--record", record, "Record (JSON object)")->required();
  push->callback([&] {
    action = [&] { return open_workbench(g).push(authenticate(g), dataset, parse_json(record, "--record")); };
  });

  std::string function, params = "{}";
  auto* analytics = app.add_subcommand("analytics", "Apply an analytic function to a dataset");
  analytics->add_option("--function", function, "Function id")->required();
  analytics->add_option("--dataset", dataset, "Dataset id")->required();
  analytics->add_option("--params", params, "Parameter overrides (JSON object)");
  analytics->callback([&] {
    action = [&] {
      return open_workbench(g).apply_analytic(authenticate(g), function, dataset, parse_json(params, "--params"));
    };
  });

  std::string field, value, mode = "delete";
  auto* find = app.add_subcommand("find", "Find records by exact field value");
  find->add_option("--dataset", dataset, "Dataset id")->required();
  auto* field_opt = find->add_option("--field", field, "Field, or annotations.<name>");
  find->add_option("--value", value, "Value to match")->needs(field_opt);
  find->callback([&] {
    action = [&] {
      FindQuery q;
      if (!field.empty()) {
        q.field = field;
        q.value = value;
      }
      return open_workbench(g).find_records(authenticate(g), dataset, q);
    };
  });

  auto* erase = app.add_subcommand("erase", "Delete or anonymize a data subject's records");
  erase->add_option("--dataset", dataset, "Dataset id")->required();
  erase->add_option("--field", field, "Field identifying the subject")->required();
  erase->add_option("--value", value, "Subject value")->required();
  erase->add_option("--mode", mode, "delete or anonymize")->check(CLI::IsMember({"delete", "anonymize"}));
  erase->callback([&] {
    action = [&] { return open_workbench(g).erase_subject(authenticate(g), dataset, field, Json(value), mode); };
  });

  std::string now;
  auto* retention = app.add_subcommand("retention", "Purge records past their retention period");
  retention->add_option("--now", now, "Reference time (RFC 3339), default: current time");
  retention->callback([&] {
    action = [&] {
      std::optional<TimestampMs> at;
      if (!now.empty()) {
        at = parse_rfc3339(now);
        if (!at) throw Error(ErrorCode::BadRequest, "--now: expected RFC 3339 timestamp", "now");
      }
      return open_workbench(g).enforce_retention(authenticate(g), at);
    };
  });

  auto* policy = app.add_subcommand("policy", "Policy meta-simulation runs");
  policy->require_subcommand(1);
  std::string tree, run;
  std::uint64_t seed = 0;
  auto* policy_run = policy->add_subcommand("run", "Run a policy tree and print its results document");
  policy_run->add_option("--tree", tree, "Policy tree (JSON)")->required()->check(CLI::ExistingFile);
  policy_run->add_option("--seed", seed, "Root seed")->required();
  policy_run->callback([&] {
    action = [&] {
      auto wb = open_workbench(g);
      const auto subject = authenticate(g);
      const auto started = wb.start_run(subject, Json{{"tree", read_json_file(tree)}, {"seed", seed}});
      const std::string run_id = started["run_id"];
      std::cerr << "run " << run_id << "\n";
      return wb.wait_results(subject, run_id);
    };
  });
  auto* policy_status = policy->add_subcommand("status", "Show a run's status");
  policy_status->add_option("--run", run, "Run id")->required();
  policy_status->callback([&] { action = [&] { return open_workbench(g).run_status(authenticate(g), run); }; });
  auto* policy_results = policy->add_subcommand("results", "Print a finished run's results document");
  policy_results->add_option("--run", run, "Run id")->required();
  policy_results->callback([&] { action = [&] { return open_workbench(g).run_results(authenticate(g), run); }; });
  auto* policy_ranking = policy->add_subcommand("ranking", "Print a finished run's ranking maps");
  policy_ranking->add_option("--run", run, "Run id")->required();
  policy_ranking->callback([&] { action = [&] { return open_workbench(g).run_ranking(authenticate(g), run); }; });

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP gateway");
  serve_cmd->add_option("--server-config", server_config, "Server configuration")->capture_default_str();
  serve_cmd->add_option("--port", serve_port, "Port override");
  bool serving = false;
  serve_cmd->callback([&] { serving = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (serving) {
      const bool state_given = app.get_option("--state")->count() > 0;
      return serve(server_config, serve_port, state_given ? g.state : std::string{});
    }
    print(action(), g.json);
    return 0;
  } catch (const Error& e) {
    if (g.json) {
      std::cerr << error_body(e).dump() << "\n";
    } else {
      std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    }
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
