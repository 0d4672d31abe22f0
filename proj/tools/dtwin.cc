// dtwin command-line entry point: scenario runs, report comparison, the
// physical-twin emulator and presence-questionnaire utilities.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "dtwin/error.h"
#include "dtwin/gateway.h"
#include "dtwin/net.h"
#include "dtwin/pq.h"
#include "dtwin/scenario.h"

namespace {

using namespace dtwin;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

struct RunOptions {
  std::string scenario;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string kpi;
  std::string attach;
  std::optional<int> gateway_port;
  std::string gateway_host = "127.0.0.1";
  bool realtime = false;
  bool no_braking = false;
  double driver_wait = 60.0;
  std::string input_log;
  std::string pq_out;
  std::string profile;
};

int cmd_run(const RunOptions& o) {
  ScenarioSpec spec = load_scenario(o.scenario);
  if (!o.mode.empty()) { spec.mode = mode_from_string(o.mode); }
  if (o.seed) {
    spec.rng_seed = *o.seed;
    spec.channel.rng_seed = *o.seed;
  }
  if (o.no_braking) { spec.controller.braking_enabled = false; }

  std::unique_ptr<GatewayHub> hub;
  std::unique_ptr<GatewayServer> server;
  std::unique_ptr<GatewayObserver> observer;
  if (o.gateway_port) {
    hub = std::make_unique<GatewayHub>();
    server = std::make_unique<GatewayServer>(
        *hub, o.gateway_host, static_cast<unsigned short>(*o.gateway_port));
    observer = std::make_unique<GatewayObserver>(*hub);
    std::cerr << "gateway listening on ws://" << o.gateway_host << ':'
              << server->port() << "\n";
  }

  std::unique_ptr<CommandSource> source;
  DriverSource* driver = nullptr;
  if (spec.mode == Mode::kHv) {
    if (!hub) { throw Error("hv mode needs --gateway-port"); }
    std::optional<MappingProfile> profile;
    if (!o.profile.empty()) {
      std::ifstream in(o.profile);
      if (!in) { throw Error("cannot open profile: " + o.profile); }
      profile = mapping_profile_from_json(nlohmann::json::parse(in));
    }
    std::cerr << "waiting for a driver...\n";
    hub->wait_for_driver(std::chrono::milliseconds(
        static_cast<std::int64_t>(o.driver_wait * 1000.0)));
    auto d = std::make_unique<DriverSource>(*hub, spec.dt, profile);
    driver = d.get();
    source = std::move(d);
  } else {
    source = std::make_unique<AutonomySource>(spec.mode, spec.controller);
  }

  std::unique_ptr<TcpPhysicalLink> link;
  if (!o.attach.empty()) { link = std::make_unique<TcpPhysicalLink>(o.attach); }

  RunEnvironment env;
  env.physical = link.get();
  env.observer = observer.get();
  env.realtime = o.realtime || spec.mode == Mode::kHv;

  const RunResult result = run(spec, *source, env);
  const RunReport& r = result.report;

  if (!o.out.empty()) {
    std::ofstream out(o.out, std::ios::binary);
    if (!out) { throw Error("cannot write " + o.out); }
    out << to_json(r).dump(2) << '\n';
    if (!out) { throw Error("cannot write " + o.out); }
  }
  if (!o.kpi.empty()) {
    const bool json = o.kpi.size() >= 5 &&
                      o.kpi.compare(o.kpi.size() - 5, 5, ".json") == 0;
    export_run(r, result.samples, std::filesystem::path(o.kpi),
               json ? ExportFormat::kJson : ExportFormat::kCsv);
  }
  if (driver && !o.input_log.empty()) {
    std::ofstream out(o.input_log);
    out << nlohmann::json{{"profile", to_json(driver->profile())},
                          {"log", to_json(driver->input_log())}}
                .dump(1)
        << '\n';
  }
  if (hub && !o.pq_out.empty()) {
    std::ofstream out(o.pq_out);
    out << "participant,configuration,item_id,rating\n";
    for (const auto& resp : hub->pq_submissions()) {
      for (const auto& [item, rating] : resp.ratings) {
        out << resp.participant_id << ',' << resp.configuration << ',' << item
            << ',' << rating << '\n';
      }
    }
  }

  std::cout << CompareTable{{r}}.to_text();
  if (server) {
    // Give clients a moment to receive the result message.
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server->stop();
  }
  const bool ok = r.completed && !r.collision &&
                  r.termination != Termination::kThreadLost;
  return ok ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& files, bool csv) {
  std::vector<RunReport> reports;
  for (const auto& f : files) {
    reports.push_back(import_run_json(std::filesystem::path(f)).report);
  }
  const CompareTable table = compare(std::move(reports));
  std::cout << (csv ? table.to_csv() : table.to_text());
  return 0;
}

int cmd_emulate(const std::string& listen, const std::string& config_path) {
  const EmulatorConfig config = config_path.empty()
                                    ? EmulatorConfig{}
                                    : load_emulator_config(config_path);
  PhysicalEmulator emulator(config, listen);
  std::cerr << "physical emulator listening on port " << emulator.port()
            << " (dt " << config.dt << " s, feed " << config.feed_rate_hz
            << " Hz)\n";
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  emulator.stop();
  return 0;
}

int cmd_pq_score(const std::string& set, const std::string& in_path,
                 const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) { throw Error("cannot open " + in_path); }
  const auto responses = pq::read_responses_csv(in, pq::set_from_string(set));
  bool valid = true;
  for (const auto& r : responses) {
    for (const auto& problem : pq::validate_response(r.ratings, r.set)) {
      std::cerr << r.participant_id << '/' << r.configuration << ": "
                << problem << '\n';
      valid = false;
    }
  }
  if (!valid) { return 2; }
  if (out_path.empty() || out_path == "-") {
    pq::write_scores_csv(std::cout, responses);
  } else {
    std::ofstream out(out_path);
    if (!out) { throw Error("cannot write " + out_path); }
    pq::write_scores_csv(out, responses);
  }
  return 0;
}

int cmd_pq_order(int n) {
  for (const auto& row : pq::latin_square(n)) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::cout << (j ? "," : "") << row[j] + 1;
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Digital-twin co-simulation toolkit"};
  app.require_subcommand(1);

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  run_cmd->add_option("--scenario", ro.scenario, "Scenario JSON")->required();
  run_cmd->add_option("--mode", ro.mode, "av | cav | hv (default: scenario)")
      ->check(CLI::IsMember({"av", "cav", "hv"}));
  run_cmd->add_option("--seed", ro.seed, "RNG seed override");
  run_cmd->add_option("--out", ro.out, "Report JSON path");
  run_cmd->add_option("--kpi", ro.kpi, "KPI log (.csv, or .json with report)");
  run_cmd->add_option("--attach-physical", ro.attach,
                      "host:port of a physical twin endpoint");
  run_cmd->add_option("--gateway-port", ro.gateway_port,
                      "Serve the HMI gateway on this port (0 = any)");
  run_cmd->add_option("--gateway-host", ro.gateway_host, "Gateway bind address");
  run_cmd->add_flag("--realtime", ro.realtime, "Pace ticks against wall time");
  run_cmd->add_flag("--no-braking", ro.no_braking,
                    "Disable ego braking (threat validation)");
  run_cmd->add_option("--driver-wait", ro.driver_wait,
                      "Seconds to wait for an hv driver");
  run_cmd->add_option("--input-log", ro.input_log, "Write hv input log JSON");
  run_cmd->add_option("--pq-out", ro.pq_out,
                      "Write questionnaire submissions as responses CSV");
  run_cmd->add_option("--profile", ro.profile, "Mapping profile JSON (hv)");

  std::vector<std::string> compare_files;
  bool compare_csv = false;
  auto* cmp = app.add_subcommand("compare", "Order reports by stop distance");
  cmp->add_option("reports", compare_files, "Report JSON files")->required();
  cmp->add_flag("--csv", compare_csv, "CSV output");

  std::string listen;
  std::string emu_config;
  auto* emu = app.add_subcommand("emulate-physical", "Run the physical twin");
  emu->add_option("--listen", listen, "host:port")->required();
  emu->add_option("--config", emu_config, "Vehicle/emulator JSON");

  auto* pq_cmd = app.add_subcommand("pq", "Presence questionnaire tools");
  pq_cmd->require_subcommand(1);
  std::string pq_set;
  std::string pq_in;
  std::string pq_out = "-";
  auto* score = pq_cmd->add_subcommand("score", "Score a responses CSV");
  score->add_option("--set", pq_set, "observation | interaction")
      ->required()
      ->check(CLI::IsMember({"observation", "interaction"}));
  score->add_option("--in", pq_in, "Responses CSV")->required();
  score->add_option("--out", pq_out, "Scores CSV (- for stdout)");
  int order_n = 4;
  auto* order = pq_cmd->add_subcommand("order", "Balanced Latin square");
  order->add_option("--n", order_n, "Number of conditions")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) { return cmd_run(ro); }
    if (*cmp) { return cmd_compare(compare_files, compare_csv); }
    if (*emu) { return cmd_emulate(listen, emu_config); }
    if (*score) { return cmd_pq_score(pq_set, pq_in, pq_out); }
    if (*order) { return cmd_pq_order(order_n); }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
