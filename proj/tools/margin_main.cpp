// margin: streaming confidence calibration for multi-agent selection.
//
// Subcommands: verify, simulate, replay, transfer, dynamic-pool, ablate,
// report. Every run writes its outputs plus a manifest; `report --manifest`
// re-executes a manifest and reproduces the outputs byte-exactly. Exit codes:
// 0 success, 1 validation error, 2 verifier failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "margin/calibrator.hpp"
#include "margin/replay.hpp"
#include "margin/report.hpp"
#include "margin/rng.hpp"
#include "margin/selection.hpp"
#include "margin/synthetic.hpp"
#include "margin/verify.hpp"
#include "margin/version.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  fs::path out_dir;
  int jobs = 1;
};

void write_manifest(const GlobalOptions& global, const std::vector<std::string>& args) {
  Json j;
  j["tool"] = "margin";
  j["version"] = margin::kVersion;
  j["argv"] = args;
  std::string joined;
  for (const auto& a : args) {
    joined += a;
    joined += '\x1f';
  }
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(margin::fnv1a64(joined)));
  j["config_hash"] = hash;
  margin::write_text_file(global.out_dir / "manifest.json", j.dump(2) + "\n");
}

// Calibrator flags shared by the replay-style commands.
struct CalibratorFlags {
  std::optional<double> alpha, alpha_up, alpha_down, shrinkage, epsilon;
  std::optional<int> bands;
  std::string prior = "model";

  void attach(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "symmetric EWMA learning rate (default 0.04)");
    cmd->add_option("--alpha-up", alpha_up, "learning rate on correct outcomes");
    cmd->add_option("--alpha-down", alpha_down, "learning rate on incorrect outcomes");
    cmd->add_option("--bands", bands, "confidence band count (default 3)");
    cmd->add_option("--shrinkage", shrinkage, "shrinkage constant k_s (default 100)");
    cmd->add_option("--epsilon", epsilon, "denominator/logit clamp (default 1e-6)");
    cmd->add_option("--prior", prior, "shrinkage prior: model | pool (default model)")
        ->check(CLI::IsMember({"model", "pool"}));
  }

  margin::CalibratorConfig resolve() const {
    margin::CalibratorConfig cfg;
    if (alpha) cfg.alpha_up = cfg.alpha_down = *alpha;
    if (alpha_up) cfg.alpha_up = *alpha_up;
    if (alpha_down) cfg.alpha_down = *alpha_down;
    if (bands) cfg.band_count = *bands;
    if (shrinkage) cfg.shrinkage = *shrinkage;
    if (epsilon) cfg.confidence_epsilon = *epsilon;
    cfg.prior_source =
        prior == "pool" ? margin::PriorSource::PoolLevel : margin::PriorSource::ModelLevel;
    cfg.validate();
    return cfg;
  }
};

std::vector<double> parse_grid(const std::string& csv, const char* what) {
  std::vector<double> values;
  std::string token;
  std::stringstream ss(csv);
  while (std::getline(ss, token, ','))
    if (!token.empty()) values.push_back(std::stod(token));
  if (values.empty())
    throw std::invalid_argument(std::string("empty grid for ") + what + ": '" + csv + "'");
  return values;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyArgs {
  bool all = false;
  int prop = 0;
  std::uint64_t seed = 0;
  std::int64_t replications = 0;  // 0: per-check default
  double alpha = 0.04;
  double theta = 0.79;
  double theta5 = 0.8;
  double a0 = 0.5;
  double delta = 0.20;
  double eps_target = 0.01;
  double up = 0.02, down = 0.06;
  double drift = 1.5e-4, theta0 = 0.34;
  std::int64_t horizon = 2000;
  std::string alphas = "0.005,0.01,0.02,0.04,0.08,0.16,0.32";
  std::string accuracies = "0.8,0.6";
  std::string sigmas = "0,0.05,0.1,0.2,0.4,0.8";
  bool theta_set = false;
};

int run_verify(const VerifyArgs& args, const GlobalOptions& global) {
  if (!args.all && (args.prop < 1 || args.prop > 6))
    throw std::invalid_argument("verify: pass --all or --prop 1..6");
  margin::VerifyBundle bundle;
  const auto reps = [&](std::int64_t fallback) {
    return args.replications > 0 ? args.replications : fallback;
  };
  const auto want = [&](int p) { return args.all || args.prop == p; };

  if (want(1)) {
    bundle.props.push_back(1);
    bundle.closed_form =
        margin::verify_closed_form(20, 300, margin::substream_seed(args.seed, "p1"));
    bundle.all_pass = bundle.all_pass && bundle.closed_form.pass;
  }
  if (want(2)) {
    bundle.props.push_back(2);
    bundle.convergence =
        margin::verify_convergence(args.alpha, args.theta, args.a0, args.horizon, reps(10000),
                                   margin::substream_seed(args.seed, "p2"));
    bundle.all_pass = bundle.all_pass && bundle.convergence.pass;
  }
  if (want(3)) {
    bundle.props.push_back(3);
    bundle.tracking =
        margin::verify_tracking(args.alpha, 0.60, args.delta, args.eps_target, reps(10000),
                                margin::substream_seed(args.seed, "p3"));
    bundle.all_pass = bundle.all_pass && bundle.tracking.pass;
  }
  if (want(4)) {
    bundle.props.push_back(4);
    bundle.ushape =
        margin::verify_ushape(parse_grid(args.alphas, "--alphas"), args.drift, args.theta0, 600,
                              1200, reps(600), margin::substream_seed(args.seed, "p4"));
    bundle.all_pass = bundle.all_pass && bundle.ushape.pass;
  }
  if (want(5)) {
    bundle.props.push_back(5);
    const double theta = args.theta_set ? args.theta : args.theta5;
    bundle.asymmetric = margin::verify_asymmetric(args.up, args.down, theta, 2500, reps(10000),
                                                  margin::substream_seed(args.seed, "p5"));
    bundle.all_pass = bundle.all_pass && bundle.asymmetric.pass;
  }
  if (want(6)) {
    bundle.props.push_back(6);
    bundle.selection = margin::verify_selection_monotonicity(
        parse_grid(args.accuracies, "--accuracies"), parse_grid(args.sigmas, "--sigmas"),
        reps(200000), margin::substream_seed(args.seed, "p6"));
    bundle.all_pass = bundle.all_pass && bundle.selection.pass;
  }

  margin::write_text_file(global.out_dir / "verify_report.json", margin::to_json_text(bundle));

  // Plot-ready series.
  char buf[200];
  if (want(2)) {
    std::string csv = "t,empirical_mean,predicted_mean,empirical_var,predicted_var\n";
    for (const auto& pt : bundle.convergence.series) {
      std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g,%.12g,%.12g\n",
                    static_cast<long long>(pt.t), pt.empirical_mean, pt.predicted_mean,
                    pt.empirical_var, pt.predicted_var);
      csv += buf;
    }
    margin::write_text_file(global.out_dir / "convergence.csv", csv);
  }
  if (want(4)) {
    std::string csv = "alpha,empirical_error,bound\n";
    for (const auto& pt : bundle.ushape.points) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", pt.alpha, pt.empirical_error,
                    pt.bound);
      csv += buf;
    }
    margin::write_text_file(global.out_dir / "ushape.csv", csv);
  }
  if (want(6)) {
    std::string csv = "sigma,empirical,predicted\n";
    for (const auto& pt : bundle.selection.points) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", pt.sigma, pt.empirical, pt.predicted);
      csv += buf;
    }
    margin::write_text_file(global.out_dir / "selection_noise.csv", csv);
  }

  for (int p : bundle.props) {
    bool pass = true;
    switch (p) {
      case 1: pass = bundle.closed_form.pass; break;
      case 2: pass = bundle.convergence.pass; break;
      case 3: pass = bundle.tracking.pass; break;
      case 4: pass = bundle.ushape.pass; break;
      case 5: pass = bundle.asymmetric.pass; break;
      case 6: pass = bundle.selection.pass; break;
    }
    std::cout << "check " << p << ": " << (pass ? "pass" : "FAIL") << "\n";
  }
  return bundle.all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string spec_path;
  int inverted = 0;
  double difficulty = 1.0;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> length, shuffles;
};

int run_simulate(const SimulateArgs& args, const CalibratorFlags& flags,
                 const GlobalOptions& global) {
  margin::ScenarioSpec spec;
  if (args.inverted > 0) {
    spec = margin::make_inverted_cohort(args.inverted, args.difficulty,
                                        args.seed.value_or(20240001u), args.length.value_or(500));
  } else if (!args.spec_path.empty()) {
    spec = margin::load_scenario(args.spec_path);
    if (args.seed) spec.seed = *args.seed;
    if (args.length) spec.length = *args.length;
  } else {
    throw std::invalid_argument("simulate: pass --spec FILE or --inverted N");
  }
  if (args.shuffles) spec.shuffle_count = *args.shuffles;
  const margin::CalibratorConfig config = flags.resolve();

  const auto stream = margin::generate(spec);
  margin::write_observations(global.out_dir / "observations.jsonl", stream);
  const auto tasks = margin::group_into_tasks(stream);

  // Raw and calibrated selection suites over shuffled task orders.
  margin::SuiteAggregate aggregate;
  aggregate.seed = spec.seed;
  aggregate.shuffles = spec.shuffle_count;
  std::map<std::string, std::vector<double>> pass1, pairwise;
  std::map<std::string, std::vector<std::vector<double>>> curves;
  std::vector<std::int64_t> checkpoints;
  for (std::int64_t s = 0; s < spec.shuffle_count; ++s) {
    margin::Rng rng(
        margin::substream_seed(spec.seed, "suite-shuffle", static_cast<std::uint64_t>(s)));
    std::vector<margin::TaskResponses> order(tasks);
    rng.shuffle(order);
    for (const auto mode : {margin::SuiteMode::Raw, margin::SuiteMode::Margin}) {
      const auto summary = margin::selection_suite(order, config, mode);
      const std::string name = mode == margin::SuiteMode::Raw ? "raw" : "margin";
      pass1[name].push_back(summary.pass1);
      if (summary.pairwise)
        pairwise[name].push_back(*summary.pairwise);
      else
        aggregate.undefined_pairwise += 1;
      checkpoints.clear();
      std::vector<double> curve;
      for (const auto& [n, v] : summary.convergence) {
        checkpoints.push_back(n);
        curve.push_back(v);
      }
      curves[name].push_back(std::move(curve));
    }
  }
  aggregate.checkpoints = checkpoints;
  const std::int64_t boot = 10000;
  for (const auto& [name, values] : pass1)
    aggregate.pass1[name] =
        margin::summarize(values, boot, margin::substream_seed(spec.seed, "ci-pass1:" + name));
  for (const auto& [name, values] : pairwise)
    aggregate.pairwise[name] =
        margin::summarize(values, boot, margin::substream_seed(spec.seed, "ci-pair:" + name));
  if (!pass1["margin"].empty() && !pass1["raw"].empty()) {
    const auto d1 = margin::paired_bootstrap(pass1["margin"], pass1["raw"], boot,
                                             margin::substream_seed(spec.seed, "delta-pass1"));
    aggregate.deltas.push_back({"margin", "raw", d1.delta_mean, d1.ci_low, d1.ci_high});
    if (pairwise["margin"].size() == pairwise["raw"].size() && !pairwise["margin"].empty()) {
      const auto d2 = margin::paired_bootstrap(pairwise["margin"], pairwise["raw"], boot,
                                               margin::substream_seed(spec.seed, "delta-pair"));
      aggregate.deltas.push_back(
          {"margin(pairwise)", "raw(pairwise)", d2.delta_mean, d2.ci_low, d2.ci_high});
    }
  }
  for (const auto& [name, all_curves] : curves) {
    std::vector<double> means(checkpoints.size(), 0.0);
    for (const auto& curve : all_curves)
      for (std::size_t i = 0; i < curve.size() && i < means.size(); ++i) means[i] += curve[i];
    for (auto& m : means) m /= static_cast<double>(all_curves.size());
    aggregate.convergence_mean[name] = means;
  }

  margin::write_text_file(global.out_dir / "report.json", margin::to_json_text(aggregate));
  margin::write_text_file(global.out_dir / "convergence.csv", margin::convergence_csv(aggregate));
  std::cout << "simulate: " << stream.size() << " observations, " << tasks.size() << " tasks\n";
  return 0;
}

// ---------------------------------------------------------------------------
// replay / transfer / dynamic-pool / ablate

struct ReplayArgs {
  std::string log_path, phase1 = "p1", phase2 = "p2";
  std::int64_t shuffles = 100;
  std::uint64_t seed = 0;
  int bins = 10;
  std::int64_t bootstrap = 10000;
  bool consistency = false;
};

void write_experiment_outputs(const margin::ExperimentReport& report,
                              const GlobalOptions& global) {
  margin::write_text_file(global.out_dir / "report.json", margin::to_json_text(report));
  margin::write_text_file(global.out_dir / "per_shuffle.csv", margin::per_shuffle_csv(report));
  for (const auto& [method, bins] : report.reliability)
    margin::write_text_file(global.out_dir / ("reliability_" + method + ".csv"),
                            margin::reliability_csv(bins));
}

int run_replay(const ReplayArgs& args, const CalibratorFlags& flags, const GlobalOptions& global) {
  const margin::ParsedLog log = margin::parse_log(args.log_path, args.consistency);
  const auto phase1 = margin::tasks_for_phase(log.observations, args.phase1);
  const auto phase2 = margin::tasks_for_phase(log.observations, args.phase2);
  if (phase1.empty())
    throw std::invalid_argument("replay: no tasks tagged '" + args.phase1 + "' in " +
                                args.log_path);
  if (phase2.empty())
    throw std::invalid_argument("replay: no tasks tagged '" + args.phase2 + "' in " +
                                args.log_path);
  margin::ShiftOptions options;
  options.shuffles = args.shuffles;
  options.seed = args.seed;
  options.bins = args.bins;
  options.bootstrap_samples = args.bootstrap;
  options.jobs = global.jobs;
  const auto report = margin::run_shift(phase1, phase2, flags.resolve(), options);
  write_experiment_outputs(report, global);
  std::cout << "replay: phase-2 ece margin=" << report.summary.at("margin").mean
            << " raw=" << report.summary.at("raw").mean << "\n";
  return 0;
}

struct TransferArgs {
  std::string source_path, target_path;
  std::int64_t shuffles = 100;
  std::uint64_t seed = 0;
  int bins = 10;
  std::int64_t bootstrap = 10000;
  bool consistency = false;
};

int run_transfer_cmd(const TransferArgs& args, const CalibratorFlags& flags,
                     const GlobalOptions& global) {
  const auto source =
      margin::group_into_tasks(margin::parse_log(args.source_path, args.consistency).observations);
  const auto target =
      margin::group_into_tasks(margin::parse_log(args.target_path, args.consistency).observations);
  margin::ShiftOptions options;
  options.shuffles = args.shuffles;
  options.seed = args.seed;
  options.bins = args.bins;
  options.bootstrap_samples = args.bootstrap;
  options.jobs = global.jobs;
  const auto report = margin::run_transfer(source, target, flags.resolve(), options);
  write_experiment_outputs(report, global);
  std::cout << "transfer: ece raw=" << report.summary.at("raw").mean
            << " transferred=" << report.summary.at("transferred").mean
            << " from_scratch=" << report.summary.at("from_scratch").mean << "\n";
  return 0;
}

struct DynamicPoolArgs {
  std::string scenario;
  std::string spec_path;
  std::int64_t shuffles = 50;
  std::uint64_t seed = 0;
  std::int64_t length = 1000;
};

int run_dynamic_pool_cmd(const DynamicPoolArgs& args, const CalibratorFlags& flags,
                         const GlobalOptions& global) {
  const margin::PoolScenario scenario = margin::pool_scenario_from_name(args.scenario);
  margin::ScenarioSpec spec = args.spec_path.empty()
                                  ? margin::make_pool_agents(args.scenario, args.seed)
                                  : margin::load_scenario(args.spec_path);
  spec.seed = args.seed;
  margin::DynamicPoolOptions options;
  options.shuffles = args.shuffles;
  options.seed = args.seed;
  options.length = args.length;
  options.jobs = global.jobs;
  const auto report = margin::run_dynamic_pool(scenario, spec, flags.resolve(), options);
  margin::write_text_file(global.out_dir / "report.json", margin::to_json_text(report));
  margin::write_text_file(global.out_dir / "series.csv", margin::series_csv(report));
  const bool pass = report.dropout_pass || report.coldstart_pass || report.rolling_pass;
  std::cout << "dynamic-pool " << args.scenario << ": " << (pass ? "pass" : "see report") << "\n";
  return 0;
}

struct AblateArgs {
  std::string grid_path;
  std::optional<std::int64_t> shuffles;
  std::optional<std::uint64_t> seed;
};

int run_ablate(const AblateArgs& args, const CalibratorFlags& flags,
               const GlobalOptions& global) {
  const Json grid = Json::parse(margin::read_text_file(args.grid_path));
  margin::AblationAxis axis;
  const std::string kind = grid.at("axis").get<std::string>();
  if (kind == "alpha") {
    axis.kind = margin::AblationAxis::Kind::Alpha;
  } else if (kind == "bands") {
    axis.kind = margin::AblationAxis::Kind::Bands;
  } else if (kind == "shrinkage") {
    axis.kind = margin::AblationAxis::Kind::Shrinkage;
  } else if (kind == "asymmetric") {
    axis.kind = margin::AblationAxis::Kind::Asymmetric;
  } else {
    throw std::invalid_argument("ablate: unknown axis '" + kind + "'");
  }
  if (axis.kind == margin::AblationAxis::Kind::Asymmetric) {
    for (const auto& pair : grid.at("pairs"))
      axis.pairs.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  } else {
    axis.values = grid.at("values").get<std::vector<double>>();
  }

  std::vector<margin::TaskResponses> phase1, phase2;
  if (grid.contains("scenario")) {
    const margin::ScenarioSpec spec = margin::scenario_from_json_text(grid.at("scenario").dump());
    const auto stream = margin::generate(spec);
    phase1 = margin::tasks_for_phase(stream, "p1");
    phase2 = margin::tasks_for_phase(stream, "p2");
  } else if (grid.contains("log")) {
    const auto log = margin::parse_log(grid.at("log").get<std::string>());
    phase1 = margin::tasks_for_phase(log.observations, grid.value("phase1", "p1"));
    phase2 = margin::tasks_for_phase(log.observations, grid.value("phase2", "p2"));
  } else {
    throw std::invalid_argument("ablate: grid file needs 'scenario' or 'log'");
  }

  margin::ShiftOptions options;
  options.shuffles = args.shuffles.value_or(grid.value("shuffles", static_cast<std::int64_t>(20)));
  options.seed = args.seed.value_or(grid.value("seed", static_cast<std::uint64_t>(0)));
  options.jobs = global.jobs;
  const auto report = margin::run_ablation(axis, phase1, phase2, flags.resolve(), options);
  margin::write_text_file(global.out_dir / "report.json", margin::to_json_text(report));

  std::string csv = "cell,margin_mean,margin_std,raw_mean,best_baseline_mean\n";
  char buf[256];
  for (const auto& cell : report.cells) {
    double best = std::numeric_limits<double>::infinity();
    for (const char* m : {"temperature", "platt", "histogram"})
      best = std::min(best, cell.methods.at(m).mean);
    std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g,%.12g\n", cell.label.c_str(),
                  cell.methods.at("margin").mean, cell.methods.at("margin").stdev,
                  cell.methods.at("raw").mean, best);
    csv += buf;
  }
  margin::write_text_file(global.out_dir / "cells.csv", csv);
  std::cout << "ablate: " << report.cells.size() << " cells\n";
  return 0;
}

int dispatch(std::vector<std::string> args, const fs::path& out_dir, int jobs);

struct ReportArgs {
  std::string manifest_path;
};

int run_report(const ReportArgs& args, const GlobalOptions& global) {
  const Json manifest = Json::parse(margin::read_text_file(args.manifest_path));
  if (manifest.value("tool", "") != "margin")
    throw std::invalid_argument("report: not a margin manifest: " + args.manifest_path);
  const auto argv = manifest.at("argv").get<std::vector<std::string>>();
  return dispatch(argv, global.out_dir, global.jobs);
}

// Parses and executes one command line (without the program name). The
// manifest stores exactly this argument vector, minus --out and --jobs, so a
// re-run goes through the identical code path.
int dispatch(std::vector<std::string> args, const fs::path& out_dir, int jobs) {
  CLI::App app{"streaming confidence calibration for multi-agent selection"};
  app.require_subcommand(1);

  GlobalOptions global;
  global.out_dir = out_dir;
  global.jobs = jobs;

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "run the numeric property checks");
  verify->add_flag("--all", verify_args.all, "run all six checks");
  verify->add_option("--prop", verify_args.prop, "run one check (1..6)");
  verify->add_option("--seed", verify_args.seed, "master seed");
  verify->add_option("--replications", verify_args.replications, "Monte-Carlo replications");
  verify->add_option("--alpha", verify_args.alpha, "learning rate");
  auto* theta_opt = verify->add_option("--theta", verify_args.theta, "outcome probability");
  verify->add_option("--a0", verify_args.a0, "initial estimate");
  verify->add_option("--t", verify_args.horizon, "horizon");
  verify->add_option("--delta", verify_args.delta, "shift magnitude (check 3)");
  verify->add_option("--eps-target", verify_args.eps_target, "recovery tolerance (check 3)");
  verify->add_option("--up", verify_args.up, "alpha_up (check 5)");
  verify->add_option("--down", verify_args.down, "alpha_down (check 5)");
  verify->add_option("--drift", verify_args.drift, "drift per observation (check 4)");
  verify->add_option("--theta0", verify_args.theta0, "drift start (check 4)");
  verify->add_option("--alphas", verify_args.alphas, "comma grid (check 4)");
  verify->add_option("--accuracies", verify_args.accuracies, "comma accuracies (check 6)");
  verify->add_option("--sigmas", verify_args.sigmas, "comma noise grid (check 6)");

  SimulateArgs sim_args;
  CalibratorFlags sim_flags;
  CLI::App* simulate = app.add_subcommand("simulate", "generate a stream and run selection");
  simulate->add_option("--spec", sim_args.spec_path, "scenario spec file (json)");
  simulate->add_option("--inverted", sim_args.inverted, "built-in inverted cohort of N agents");
  simulate->add_option("--difficulty", sim_args.difficulty, "inversion strength in [0.3, 1]");
  simulate->add_option("--seed", sim_args.seed, "override scenario seed");
  simulate->add_option("--length", sim_args.length, "override stream length");
  simulate->add_option("--shuffles", sim_args.shuffles, "ordering shuffles");
  sim_flags.attach(simulate);

  ReplayArgs replay_args;
  CalibratorFlags replay_flags;
  CLI::App* replay = app.add_subcommand("replay", "two-phase shift protocol over a log");
  replay->add_option("--log", replay_args.log_path, "observation log (json lines)")->required();
  replay->add_option("--phase1", replay_args.phase1, "phase-1 tag (default p1)");
  replay->add_option("--phase2", replay_args.phase2, "phase-2 tag (default p2)");
  replay->add_option("--shuffles", replay_args.shuffles, "ordering shuffles (default 100)");
  replay->add_option("--seed", replay_args.seed, "master seed");
  replay->add_option("--bins", replay_args.bins, "ece bins (default 10)");
  replay->add_option("--bootstrap", replay_args.bootstrap, "bootstrap resamples (default 10000)");
  replay->add_flag("--consistency", replay_args.consistency,
                   "use consistency-sample confidence where available");
  replay_flags.attach(replay);

  TransferArgs transfer_args;
  CalibratorFlags transfer_flags;
  CLI::App* transfer = app.add_subcommand("transfer", "frozen-factor transfer protocol");
  transfer->add_option("--source", transfer_args.source_path, "source log")->required();
  transfer->add_option("--target", transfer_args.target_path, "target log")->required();
  transfer->add_option("--shuffles", transfer_args.shuffles, "ordering shuffles (default 100)");
  transfer->add_option("--seed", transfer_args.seed, "master seed");
  transfer->add_option("--bins", transfer_args.bins, "ece bins (default 10)");
  transfer->add_option("--bootstrap", transfer_args.bootstrap, "bootstrap resamples");
  transfer->add_flag("--consistency", transfer_args.consistency,
                     "use consistency-sample confidence where available");
  transfer_flags.attach(transfer);

  DynamicPoolArgs pool_args;
  CalibratorFlags pool_flags;
  CLI::App* pool = app.add_subcommand("dynamic-pool", "agent churn scenarios");
  pool->add_option("--scenario", pool_args.scenario, "dropout | coldstart | rolling")
      ->required()
      ->check(CLI::IsMember({"dropout", "coldstart", "rolling"}));
  pool->add_option("--spec", pool_args.spec_path, "agent roster spec (json); built-in if omitted");
  pool->add_option("--shuffles", pool_args.shuffles, "shuffles (default 50)");
  pool->add_option("--seed", pool_args.seed, "master seed");
  pool->add_option("--length", pool_args.length, "observations per run (default 1000)");
  pool_flags.attach(pool);

  AblateArgs ablate_args;
  CalibratorFlags ablate_flags;
  CLI::App* ablate = app.add_subcommand("ablate", "hyperparameter grid over the shift protocol");
  ablate->add_option("--grid", ablate_args.grid_path, "grid file (json)")->required();
  ablate->add_option("--shuffles", ablate_args.shuffles, "override grid shuffles");
  ablate->add_option("--seed", ablate_args.seed, "override grid seed");
  ablate_flags.attach(ablate);

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "re-run a manifest");
  report->add_option("--manifest", report_args.manifest_path, "manifest.json path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  verify_args.theta_set = theta_opt->count() > 0;

  fs::create_directories(global.out_dir);
  if (!report->parsed()) write_manifest(global, args);

  if (verify->parsed()) return run_verify(verify_args, global);
  if (simulate->parsed()) return run_simulate(sim_args, sim_flags, global);
  if (replay->parsed()) return run_replay(replay_args, replay_flags, global);
  if (transfer->parsed()) return run_transfer_cmd(transfer_args, transfer_flags, global);
  if (pool->parsed()) return run_dynamic_pool_cmd(pool_args, pool_flags, global);
  if (ablate->parsed()) return run_ablate(ablate_args, ablate_flags, global);
  if (report->parsed()) return run_report(report_args, global);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);

  // --out and --jobs are runtime knobs, stripped before the manifest is built.
  fs::path out_dir;
  int jobs = 1;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) {
      out_dir = args[++i];
    } else if (args[i] == "--jobs" && i + 1 < args.size()) {
      jobs = std::stoi(args[++i]);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (out_dir.empty()) {
    if (const char* env = std::getenv("MARGIN_OUT_DIR"))
      out_dir = env;
    else
      out_dir = "margin-out";
  }
  if (jobs < 1) {
    std::cerr << "error: --jobs must be >= 1\n";
    return 1;
  }

  try {
    return dispatch(rest, out_dir, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
