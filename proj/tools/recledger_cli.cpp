#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "recledger/recledger.hpp"

namespace fs = std::filesystem;
using namespace recledger;

namespace {

constexpr int kOk = 0;
constexpr int kInvariant = 1;
constexpr int kParse = 2;
constexpr int kConfig = 3;

std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool write_file(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary);
  out << data;
  return static_cast<bool>(out);
}

std::optional<ControlMap> load_control_map(const std::optional<std::string>& path) {
  if (!path) return default_control_map();
  auto text = read_file(*path);
  if (!text) {
    std::cerr << "error: cannot read control map " << *path << '\n';
    return std::nullopt;
  }
  auto map = parse_control_map(*text);
  if (!map) {
    std::cerr << *path << ":" << map.error().line << ": " << map.error().message << '\n';
    return std::nullopt;
  }
  return *map;
}

std::optional<ChainRules> load_rules(const fs::path& path) {
  auto text = read_file(path);
  if (!text) {
    std::cerr << "error: cannot read participants file " << path.string() << '\n';
    return std::nullopt;
  }
  auto file = parse_participants(*text);
  if (!file) {
    std::cerr << path.string() << ":" << file.error().line << ": " << file.error().message << '\n';
    return std::nullopt;
  }
  auto rules = rules_for(*file);
  if (!rules) {
    std::cerr << "error: " << rules.error().message << '\n';
    return std::nullopt;
  }
  return *rules;
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
  auto text = read_file(scenario_path);
  if (!text) {
    std::cerr << "error: cannot read " << scenario_path << '\n';
    return kParse;
  }
  auto scn = parse_scenario(*text);
  if (!scn) {
    std::cerr << scenario_path << ":" << scn.error().line << ": " << scn.error().message << '\n';
    return kParse;
  }
  if (seed) scn->run.seed = *seed;

  std::optional<std::string> map_path;
  if (scn->control_map_path) map_path = (fs::path(scenario_path).parent_path() / *scn->control_map_path).string();
  auto controls = load_control_map(map_path);
  if (!controls) return kConfig;

  auto sim = Simulator::create(scn->run);
  if (!sim) {
    std::cerr << "config error: " << sim.error().message << '\n';
    return kConfig;
  }
  auto report = sim->run();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  fs::path out(out_dir);
  bool wrote = write_file(out / "events.log", report.event_log_text());
  std::string rendered = report.render();
  auto events = parse_event_log(report.event_log_text()).value();
  auto tags = tag_events(events, *controls);
  if (!tags) {
    std::cerr << "config error: event kind " << tags.error().kind << " has no control mapping\n";
    return kConfig;
  }
  rendered += "control_coverage:\n";
  for (const auto& [fam, n] : *tags) rendered += "  " + fam + ": " + std::to_string(n) + '\n';
  wrote = wrote && write_file(out / "report.txt", rendered);
  wrote = wrote && write_file(out / "participants.txt", export_participants(sim->directory(), sim->config().f));
  for (const auto& n : sim->nodes())
    if (n.validator) wrote = wrote && write_file(out / ("chain-" + n.id + ".hex"), export_chain(n.chain.blocks()));
  if (!wrote) {
    std::cerr << "error: cannot write to " << out_dir << '\n';
    return kConfig;
  }

  std::cout << rendered;
  if (report.safety_violations > 0) std::cerr << "invariant violation: honest validators diverged\n";
  if (!report.conservation_ok) std::cerr << "invariant violation: MWh conservation failed\n";
  return report.safety_violations == 0 && report.conservation_ok ? kOk : kInvariant;
}

fs::path default_participants(const std::string& chain_path) {
  return fs::path(chain_path).parent_path() / "participants.txt";
}

int cmd_verify(const std::string& chain_path, std::optional<std::string> participants) {
  auto rules = load_rules(participants ? fs::path(*participants) : default_participants(chain_path));
  if (!rules) return kParse;
  auto text = read_file(chain_path);
  if (!text) {
    std::cerr << "error: cannot read " << chain_path << '\n';
    return kParse;
  }
  auto lines = read_chain_lines(*text);
  if (!lines) {
    std::cerr << chain_path << ":" << lines.error().line << ": " << lines.error().message << '\n';
    return kParse;
  }
  auto verdict = verify_encoded_chain(*lines, *rules);
  std::cout << verdict.describe() << '\n';
  return verdict.valid() ? kOk : kInvariant;
}

int cmd_audit(const std::string& chain_path, const std::string& events_path, const std::string& period_text,
              std::optional<std::string> control_map, const std::string& format,
              std::optional<std::string> participants) {
  auto colon = period_text.find(':');
  AuditPeriod period;
  try {
    if (colon == std::string::npos) throw std::invalid_argument("period");
    std::size_t a = 0, b = 0;
    period.start = std::stoull(period_text.substr(0, colon), &a);
    period.end = std::stoull(period_text.substr(colon + 1), &b);
    if (a != colon || b != period_text.size() - colon - 1) throw std::invalid_argument("period");
  } catch (const std::exception&) {
    std::cerr << "error: --period must look like start:end\n";
    return kParse;
  }
  auto rules = load_rules(participants ? fs::path(*participants) : default_participants(chain_path));
  if (!rules) return kParse;
  auto controls = load_control_map(control_map);
  if (!controls) return kConfig;
  auto chain_text = read_file(chain_path);
  auto events_text = read_file(events_path);
  if (!chain_text || !events_text) {
    std::cerr << "error: cannot read " << (chain_text ? events_path : chain_path) << '\n';
    return kParse;
  }
  auto blocks = import_chain(*chain_text);
  if (!blocks) {
    std::cerr << chain_path << ":" << blocks.error().line << ": " << blocks.error().message << '\n';
    return kParse;
  }
  auto events = parse_event_log(*events_text);
  if (!events) {
    std::cerr << events_path << ":" << events.error().line << ": " << events.error().message << '\n';
    return kParse;
  }
  auto report = annual_audit(*blocks, period, *events, *controls, *rules);
  if (!report) {
    std::cerr << "error: " << report.error().message << '\n';
    return kConfig;
  }
  std::cout << export_report(*report, format == "machine" ? ReportFormat::Machine : ReportFormat::Text);
  return report->conservation_ok ? kOk : kInvariant;
}

int cmd_attack(const std::string& name, std::uint64_t seed) {
  auto res = run_attack(name, seed);
  if (!res) {
    std::cerr << "error: " << res.error().message << '\n';
    return kConfig;
  }
  std::cout << "attack: " << res->name << "\nseed: " << seed << '\n';
  for (const auto& f : res->findings) std::cout << f << '\n';
  std::cout << "defense: " << (res->held ? "held" : "BROKEN") << '\n';
  return res->held ? kOk : kInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permissioned REC ledger: simulate, verify, audit, attack"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario file");
  std::string scenario, out_dir = "out";
  std::optional<std::uint64_t> run_seed;
  run->add_option("scenario", scenario, "scenario file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", run_seed, "override the scenario seed");

  auto* verify = app.add_subcommand("verify", "verify an exported chain");
  std::string chain;
  std::optional<std::string> participants;
  verify->add_option("chain", chain, "chain export (one hex block per line)")->required();
  verify->add_option("--participants", participants, "participants file (default: next to the chain)");

  auto* audit = app.add_subcommand("audit", "audit a chain and event log for a period");
  std::string events, period, format = "text";
  std::optional<std::string> control_map;
  audit->add_option("chain", chain, "chain export")->required();
  audit->add_option("events", events, "event log")->required();
  audit->add_option("--period", period, "start:end ticks, inclusive")->required();
  audit->add_option("--control-map", control_map, "control map file (default: built-in)");
  audit->add_option("--format", format, "text or machine")->check(CLI::IsMember({"text", "machine"}));
  audit->add_option("--participants", participants, "participants file (default: next to the chain)");

  auto* attack = app.add_subcommand("attack", "run a built-in attack scenario");
  std::string attack_name;
  std::uint64_t attack_seed = 1;
  attack->add_option("name", attack_name, "attack name")->required()->check(CLI::IsMember(attack_names()));
  attack->add_option("--seed", attack_seed, "simulation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kParse;
  }

  if (*run) return cmd_run(scenario, out_dir, run_seed);
  if (*verify) return cmd_verify(chain, participants);
  if (*audit) return cmd_audit(chain, events, period, control_map, format, participants);
  if (*attack) return cmd_attack(attack_name, attack_seed);
  return kParse;
}
