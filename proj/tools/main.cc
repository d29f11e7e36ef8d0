#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tripleval/config.h"
#include "tripleval/errors.h"
#include "tripleval/manifest.h"
#include "tripleval/mock_server.h"
#include "tripleval/pipeline.h"

namespace {

tripleval::MockServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

int run_stages(const std::string& config_path, const tripleval::ConfigOverrides& overrides,
               bool force, const std::string& stage) {
  tripleval::Config config;
  std::optional<tripleval::Pipeline> pipeline;
  try {
    config = tripleval::load_config(config_path, overrides);
    pipeline.emplace(config, tripleval::PipelineOptions{force, {}});
  } catch (const tripleval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  const std::vector<std::string> stages =
      stage == "all" ? tripleval::stage_order() : std::vector<std::string>{stage};
  for (const auto& s : stages) {
    try {
      const auto outcome = pipeline->run_stage(s);
      std::cout << s << ": "
                << (outcome == tripleval::StageOutcome::kRan ? "done" : "up to date, skipped")
                << "\n";
    } catch (const tripleval::ConfigError& e) {
      std::cerr << s << ": config error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << s << ": failed: " << e.what() << "\n"
                << "manifest: " << pipeline->manifest_path() << "\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Triple-level evaluation pipeline for retrieval-augmented generation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path = "tripleval.json";
  std::optional<std::string> run_id;
  std::optional<uint64_t> seed;
  std::optional<size_t> subsample;
  bool force = false;
  app.add_option("--config", config_path, "Run configuration (JSON)");
  app.add_option("--run-id", run_id, "Run directory name under run_root");
  app.add_flag("--force", force, "Re-run stages that are already done");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--subsample-per-condition", subsample,
                 "Test datapoints drawn per retrieval condition");

  std::string selected;
  for (const auto& stage : tripleval::stage_order()) {
    app.add_subcommand(stage, "Run the " + stage + " stage")
        ->callback([&selected, stage] { selected = stage; });
  }
  app.add_subcommand("all", "Run every stage in order")->callback([&selected] {
    selected = "all";
  });

  std::string fixture_path;
  std::string host = "127.0.0.1";
  int port = 8089;
  auto* mock = app.add_subcommand("mock-serve", "Serve canned completions and embeddings");
  mock->add_option("--fixture", fixture_path, "Mock fixture (JSON)")->required();
  mock->add_option("--port", port, "Port, 0 picks a free one");
  mock->add_option("--host", host, "Bind address");
  mock->callback([&selected] { selected = "mock-serve"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (selected == "mock-serve") {
    try {
      tripleval::MockServer server(tripleval::MockFixture::load(fixture_path));
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "mock server on " << host << ":" << port << std::endl;
      server.serve_blocking(host, port);
      g_server = nullptr;
      return 0;
    } catch (const tripleval::ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "mock-serve: " << e.what() << "\n";
      return 1;
    }
  }

  tripleval::ConfigOverrides overrides;
  overrides.run_id = run_id;
  overrides.seed = seed;
  overrides.subsample_per_condition = subsample;
  return run_stages(config_path, overrides, force, selected);
}
