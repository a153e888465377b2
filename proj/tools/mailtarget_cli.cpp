// mailtarget: batch targeting for recommendation emails.
//
//   ingest       validate a dataset directory and write its normalized form
//   build-graph  export the category transition graph
//   select       score candidate lists and write the send plan for a window
//   simulate     generate a synthetic scenario, or replay a plan's responses
//   report       compare the proposed selector against the baseline funnel
//
// Every command writes its artifacts plus manifest.json into --out.

#include <openssl/evp.h>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mailtarget/mailtarget.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mailtarget;

namespace {

#ifndef MAILTARGET_VERSION
#define MAILTARGET_VERSION "dev"
#endif

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string command;
  json parameters = json::object();
  std::vector<fs::path> inputs;
  std::vector<std::string> outputs;
  std::string fixed_timestamp;

  void write(const fs::path& out_dir) const {
    json doc;
    doc["command"] = command;
    doc["tool_version"] = MAILTARGET_VERSION;
    doc["timestamp"] = fixed_timestamp.empty() ? utc_now() : fixed_timestamp;
    doc["parameters"] = parameters;
    json digests = json::object();
    for (const auto& p : inputs) digests[p.string()] = "sha256:" + sha256_file(p);
    doc["inputs"] = digests;
    doc["outputs"] = outputs;
    std::ofstream f(out_dir / "manifest.json");
    f << doc.dump(2) << '\n';
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

Date parse_date_flag(const std::string& text, const char* flag) {
  auto d = parse_date(text);
  if (!d) throw ConfigError(std::string(flag) + " expects YYYY-MM-DD, got '" + text + "'");
  return *d;
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  const auto p = DatasetPaths::in_directory(dir);
  return {p.categories, p.users, p.items, p.activity, p.exposure};
}

// Falls back to the scenario.toml that `simulate` leaves beside a generated dataset.
std::string scenario_for(const std::string& given, const std::string& data) {
  if (!given.empty() || data.empty()) return given;
  const auto beside = fs::path(data) / "scenario.toml";
  return fs::exists(beside) ? beside.string() : std::string{};
}

SimulationConfig load_scenario(const std::string& path) {
  if (path.empty()) {
    SimulationConfig config;
    config.validate();
    return config;
  }
  auto in = open_input(path);
  return parse_scenario(in, path);
}

// Options shared by several subcommands. Empty strings mean "not given".
struct Common {
  std::string today;
  int window_days = kDefaultWindowDays;
  std::uint64_t seed = 42;
  bool seed_given = false;
  std::string out;
  std::string fixed_timestamp;

  Date today_or(Date fallback) const {
    return today.empty() ? fallback : parse_date_flag(today, "--today");
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_window, bool with_seed) {
  cmd->add_option("--today", c.today, "Reference date YYYY-MM-DD (default: current date)");
  if (with_window) {
    cmd->add_option("--window-days", c.window_days, "Activity window length in days")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
  if (with_seed) cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--fixed-timestamp", c.fixed_timestamp,
                  "Timestamp recorded in manifest.json instead of the current time");
}

int cmd_ingest(const Common& c, const std::string& data) {
  const Date today = c.today_or(today_utc());
  const auto corpus = load_dataset(DatasetPaths::in_directory(data), today);
  write_dataset(corpus, c.out);
  std::cout << "categories " << corpus.num_categories() << ", users " << corpus.users().size()
            << ", items " << corpus.items().size() << ", activity events "
            << corpus.activity().size() << ", exposure events " << corpus.exposures().size()
            << " (" << corpus.synthesized_seen() << " seen synthesized)\n";
  Manifest m;
  m.command = "ingest";
  m.parameters = {{"data", data}, {"today", format_date(today)}, {"out", c.out}};
  m.parameters["counts"] = {{"categories", corpus.num_categories()},
                            {"users", corpus.users().size()},
                            {"items", corpus.items().size()},
                            {"activity", corpus.activity().size()},
                            {"exposure", corpus.exposures().size()},
                            {"synthesized_seen", corpus.synthesized_seen()}};
  m.inputs = dataset_files(data);
  m.outputs = {kCategoriesFile, kUsersFile, kItemsFile, kActivityFile, kExposureFile};
  m.fixed_timestamp = c.fixed_timestamp;
  m.write(c.out);
  return 0;
}

int cmd_build_graph(const Common& c, const std::string& data, const GraphOptions& options) {
  const Date today = c.today_or(today_utc());
  const auto corpus = load_dataset(DatasetPaths::in_directory(data), today);
  const auto graph = build_transition_graph(corpus, options);
  {
    auto out = open_output(fs::path(c.out) / "graph.csv");
    write_graph(out, graph);
  }
  std::cout << "edges " << graph.edges().size() << " over " << graph.num_categories()
            << " categories\n";
  Manifest m;
  m.command = "build-graph";
  m.parameters = {{"data", data},
                  {"today", format_date(today)},
                  {"min_support", options.min_support},
                  {"laplace_alpha", options.laplace_alpha},
                  {"out", c.out}};
  m.inputs = dataset_files(data);
  m.outputs = {"graph.csv"};
  m.fixed_timestamp = c.fixed_timestamp;
  m.write(c.out);
  return 0;
}

struct SelectArgs {
  std::string data;
  std::string candidates;
  std::string graph;
  std::string window_id;
  std::size_t budget = 0;
  double threshold = kDefaultThreshold;
  GraphOptions graph_options;
};

int cmd_select(const Common& c, const SelectArgs& a) {
  const Date today = c.today_or(today_utc());
  const Date window_id = a.window_id.empty() ? today : parse_date_flag(a.window_id, "--window-id");
  const auto window = ScoringWindow::ending(today, c.window_days);
  const auto corpus = load_dataset(DatasetPaths::in_directory(a.data), today);
  const fs::path candidates_path =
      a.candidates.empty() ? fs::path(a.data) / "candidates.csv" : fs::path(a.candidates);

  std::vector<fs::path> inputs = dataset_files(a.data);
  TransitionGraph graph;
  if (a.graph.empty()) {
    graph = build_transition_graph(corpus, a.graph_options);
  } else {
    auto in = open_input(a.graph);
    graph = read_graph(in, a.graph, corpus.num_categories(), a.graph_options);
    inputs.emplace_back(a.graph);
  }
  std::vector<CandidateList> candidates;
  {
    auto in = open_input(candidates_path);
    candidates = read_candidates(in, candidates_path.string(), corpus);
    inputs.push_back(candidates_path);
  }
  const auto profiles = build_activity_profiles(corpus);
  const auto plan = select_batch(score_candidates(candidates, corpus, profiles, graph, window),
                                 a.budget, a.threshold, window_id);
  {
    auto out = open_output(fs::path(c.out) / "plan.csv");
    write_plan(out, plan);
  }
  std::cout << "selected " << plan.selections.size() << " of " << candidates.size()
            << " candidates (budget " << a.budget << ")\n";

  Manifest m;
  m.command = "select";
  m.parameters = {{"data", a.data},
                  {"candidates", candidates_path.string()},
                  {"graph", a.graph.empty() ? "built from data" : a.graph},
                  {"today", format_date(today)},
                  {"window_id", format_date(window_id)},
                  {"window_days", c.window_days},
                  {"budget", a.budget},
                  {"threshold", a.threshold},
                  {"min_support", a.graph_options.min_support},
                  {"laplace_alpha", a.graph_options.laplace_alpha},
                  {"out", c.out}};
  m.inputs = inputs;
  m.outputs = {"plan.csv"};
  m.fixed_timestamp = c.fixed_timestamp;
  m.write(c.out);
  return 0;
}

struct SimulateArgs {
  std::string scenario;
  std::string plan;
  std::string data;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  const auto scenario = scenario_for(a.scenario, a.data);
  auto config = load_scenario(scenario);
  if (c.seed_given) config.seed = c.seed;
  if (!c.today.empty()) config.today = parse_date_flag(c.today, "--today");
  Manifest m;
  m.command = "simulate";
  m.fixed_timestamp = c.fixed_timestamp;
  if (!scenario.empty()) m.inputs.emplace_back(scenario);

  if (a.plan.empty()) {
    const auto corpus = generate_corpus(config);
    const auto candidates = generate_candidates(config, corpus);
    write_dataset(corpus, c.out);
    {
      auto out = open_output(fs::path(c.out) / "candidates.csv");
      write_candidates(out, candidates);
    }
    {
      auto out = open_output(fs::path(c.out) / "scenario.toml");
      write_scenario(out, config);
    }
    std::cout << "generated " << corpus.users().size() << " users, " << corpus.items().size()
              << " items, " << corpus.exposures().size() << " exposure events, "
              << candidates.size() << " candidate lists\n";
    m.parameters = {{"mode", "generate"},
                    {"scenario", scenario.empty() ? "built-in default" : scenario},
                    {"seed", config.seed},
                    {"today", format_date(config.today)},
                    {"window_days", config.window_days},
                    {"out", c.out}};
    m.outputs = {kCategoriesFile, kUsersFile, kItemsFile, kActivityFile, kExposureFile,
                 "candidates.csv", "scenario.toml"};
    m.write(c.out);
    return 0;
  }

  if (a.data.empty()) throw ConfigError("--plan requires --data");
  const auto window = ScoringWindow::ending(config.today, config.window_days);
  const auto corpus = load_dataset(DatasetPaths::in_directory(a.data), config.today);
  BatchPlan plan;
  {
    auto in = open_input(a.plan);
    plan = read_plan(in, a.plan, config.today);
  }
  const auto outcomes = simulate_responses(plan, corpus, config.ground_truth, window, config.seed);
  {
    auto out = open_output(fs::path(c.out) / "outcomes.csv");
    write_outcomes(out, outcomes);
  }
  const auto metrics = compute_funnel(outcomes);
  std::cout << "sent " << metrics.counts.sent << ", opens " << metrics.counts.opens << ", clicks "
            << metrics.counts.clicks << ", apps " << metrics.counts.apps << '\n';
  m.parameters = {{"mode", "replay"},
                  {"scenario", scenario.empty() ? "built-in default" : scenario},
                  {"plan", a.plan},
                  {"data", a.data},
                  {"seed", config.seed},
                  {"today", format_date(config.today)},
                  {"window_days", config.window_days},
                  {"out", c.out}};
  auto inputs = dataset_files(a.data);
  inputs.emplace_back(a.plan);
  m.inputs.insert(m.inputs.end(), inputs.begin(), inputs.end());
  m.outputs = {"outcomes.csv"};
  m.write(c.out);
  return 0;
}

struct ReportArgs {
  std::string data;
  std::string candidates;
  std::string scenario;
  std::string control_outcomes;
  std::string proposed_outcomes;
  std::optional<std::size_t> budget;
  double budget_fraction = 0.3;
  double threshold = kDefaultThreshold;
  std::size_t baseline_items = 3;
  GraphOptions graph_options;
  bool window_given = false;
};

void write_reports(const fs::path& dir, const ComparisonReport& report) {
  {
    auto out = open_output(dir / "report.txt");
    write_report_text(out, report);
  }
  {
    auto out = open_output(dir / "report.csv");
    write_report_csv(out, report);
  }
  write_report_text(std::cout, report);
}

int cmd_report(const Common& c, const ReportArgs& a) {
  Manifest m;
  m.command = "report";
  m.fixed_timestamp = c.fixed_timestamp;
  const fs::path out_dir = c.out;

  if (!a.control_outcomes.empty() || !a.proposed_outcomes.empty()) {
    if (a.control_outcomes.empty() || a.proposed_outcomes.empty()) {
      throw ConfigError("--control-outcomes and --proposed-outcomes must be given together");
    }
    auto ci = open_input(a.control_outcomes);
    auto pi = open_input(a.proposed_outcomes);
    const auto control = compute_funnel(read_outcomes(ci, a.control_outcomes));
    const auto proposed = compute_funnel(read_outcomes(pi, a.proposed_outcomes));
    write_reports(out_dir, compare_report(control, proposed));
    m.parameters = {{"mode", "compare"}, {"out", c.out}};
    m.inputs = {a.control_outcomes, a.proposed_outcomes};
    m.outputs = {"report.txt", "report.csv"};
    m.write(out_dir);
    return 0;
  }

  if (a.data.empty()) throw ConfigError("report needs --data, or both outcome files");
  const auto scenario = scenario_for(a.scenario, a.data);
  auto config = load_scenario(scenario);
  if (c.seed_given) config.seed = c.seed;
  const Date today = c.today_or(config.today);
  const int window_days = a.window_given ? c.window_days : config.window_days;
  const auto window = ScoringWindow::ending(today, window_days);
  const auto corpus = load_dataset(DatasetPaths::in_directory(a.data), today);
  const fs::path candidates_path =
      a.candidates.empty() ? fs::path(a.data) / "candidates.csv" : fs::path(a.candidates);
  std::vector<CandidateList> candidates;
  {
    auto in = open_input(candidates_path);
    candidates = read_candidates(in, candidates_path.string(), corpus);
  }

  EvaluationOptions options;
  options.graph = a.graph_options;
  options.threshold = a.threshold;
  options.budget = a.budget;
  options.budget_fraction = a.budget_fraction;
  options.baseline_items = a.baseline_items;
  options.seed = config.seed;
  const auto ev = evaluate(corpus, candidates, config.ground_truth, window, options);

  auto emit = [&](const char* name, auto&& writer) {
    auto out = open_output(out_dir / name);
    writer(out);
  };
  emit("graph.csv", [&](std::ostream& o) { write_graph(o, ev.graph); });
  emit("plan_control.csv", [&](std::ostream& o) { write_plan(o, ev.control_plan); });
  emit("plan_proposed.csv", [&](std::ostream& o) { write_plan(o, ev.proposed_plan); });
  emit("outcomes_control.csv", [&](std::ostream& o) { write_outcomes(o, ev.control_outcomes); });
  emit("outcomes_proposed.csv",
       [&](std::ostream& o) { write_outcomes(o, ev.proposed_outcomes); });
  write_reports(out_dir, ev.report);

  m.parameters = {{"mode", "evaluate"},
                  {"data", a.data},
                  {"candidates", candidates_path.string()},
                  {"scenario", scenario.empty() ? "built-in default" : scenario},
                  {"seed", config.seed},
                  {"today", format_date(today)},
                  {"window_days", window_days},
                  {"budget", ev.proposed_plan.budget},
                  {"budget_fraction", a.budget ? json(nullptr) : json(a.budget_fraction)},
                  {"threshold", a.threshold},
                  {"baseline_items", a.baseline_items},
                  {"min_support", a.graph_options.min_support},
                  {"laplace_alpha", a.graph_options.laplace_alpha},
                  {"out", c.out}};
  m.inputs = dataset_files(a.data);
  m.inputs.push_back(candidates_path);
  if (!scenario.empty()) m.inputs.emplace_back(scenario);
  m.outputs = {"graph.csv",           "plan_control.csv",      "plan_proposed.csv",
               "outcomes_control.csv", "outcomes_proposed.csv", "report.txt",
               "report.csv"};
  m.write(out_dir);
  return 0;
}

void add_graph_flags(CLI::App* cmd, GraphOptions& g) {
  cmd->add_option("--min-support", g.min_support,
                  "Minimum distinct seen pairs for a category edge")
      ->capture_default_str();
  cmd->add_option("--laplace-alpha", g.laplace_alpha, "Additive smoothing for edge probabilities")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch targeting engine for recommendation emails"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MAILTARGET_VERSION);

  Common common;
  std::string data;
  GraphOptions graph_options;
  SelectArgs select_args;
  SimulateArgs simulate_args;
  ReportArgs report_args;
  std::size_t report_budget = 0;

  auto* ingest = app.add_subcommand("ingest", "Validate and normalize a dataset directory");
  ingest->add_option("--data", data, "Directory holding the five dataset CSV files")->required();
  add_common(ingest, common, false, false);

  auto* graph = app.add_subcommand("build-graph", "Build and export the category transition graph");
  graph->add_option("--data", data, "Dataset directory")->required();
  add_graph_flags(graph, graph_options);
  add_common(graph, common, false, false);

  auto* select = app.add_subcommand("select", "Select the send batch for one window");
  select->add_option("--data", select_args.data, "Dataset directory")->required();
  select->add_option("--candidates", select_args.candidates,
                     "Candidate lists (default: <data>/candidates.csv)");
  select->add_option("--graph", select_args.graph, "Exported graph.csv (default: build from data)");
  select->add_option("--budget", select_args.budget, "Maximum emails in this window")->required();
  select->add_option("--threshold", select_args.threshold, "Minimum combined score")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  select->add_option("--window-id", select_args.window_id, "Send window date (default: --today)");
  add_graph_flags(select, select_args.graph_options);
  add_common(select, common, true, false);

  auto* simulate = app.add_subcommand(
      "simulate", "Generate a synthetic scenario, or replay a plan's responses with --plan");
  simulate->add_option("--scenario", simulate_args.scenario,
                       "Scenario key/value file (default: <data>/scenario.toml with --plan, else built-in)");
  simulate->add_option("--plan", simulate_args.plan, "Plan to replay instead of generating data");
  simulate->add_option("--data", simulate_args.data, "Dataset directory (with --plan)");
  add_common(simulate, common, false, true);

  auto* report = app.add_subcommand("report", "Compare proposed and baseline funnels");
  report->add_option("--data", report_args.data, "Dataset directory");
  report->add_option("--candidates", report_args.candidates,
                     "Candidate lists (default: <data>/candidates.csv)");
  report->add_option("--scenario", report_args.scenario,
                     "Scenario providing the response model (default: <data>/scenario.toml, else built-in)");
  auto* budget_opt =
      report->add_option("--budget", report_budget, "Absolute proposed budget");
  report->add_option("--budget-fraction", report_args.budget_fraction,
                     "Proposed budget as a share of baseline sends when --budget is absent")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  report->add_option("--threshold", report_args.threshold, "Minimum combined score")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  report->add_option("--baseline-items", report_args.baseline_items,
                     "Items per baseline email")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  report->add_option("--control-outcomes", report_args.control_outcomes,
                     "Precomputed control outcomes.csv");
  report->add_option("--proposed-outcomes", report_args.proposed_outcomes,
                     "Precomputed proposed outcomes.csv");
  add_graph_flags(report, report_args.graph_options);
  add_common(report, common, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }

  for (auto* sub : app.get_subcommands()) {
    if (auto* opt = sub->get_option_no_throw("--seed")) common.seed_given = opt->count() > 0;
    if (auto* opt = sub->get_option_no_throw("--window-days")) {
      report_args.window_given = opt->count() > 0;
    }
  }
  if (budget_opt->count() > 0) report_args.budget = report_budget;

  try {
    fs::create_directories(common.out);
    if (*ingest) return cmd_ingest(common, data);
    if (*graph) return cmd_build_graph(common, data, graph_options);
    if (*select) return cmd_select(common, select_args);
    if (*simulate) return cmd_simulate(common, simulate_args);
    if (*report) return cmd_report(common, report_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
