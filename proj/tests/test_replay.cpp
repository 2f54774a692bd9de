#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "margin/replay.hpp"
#include "margin/report.hpp"
#include "margin/rng.hpp"
#include "margin/synthetic.hpp"

using namespace margin;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "margin-tests";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("consistency confidence is the match fraction against the first sample") {
  const std::vector<std::string> all_same{"x", "x", "x"};
  CHECK(consistency_confidence(all_same) == doctest::Approx(1.0));
  const std::vector<std::string> mixed{"x", "x", "y", "x", "z"};
  CHECK(consistency_confidence(mixed) == doctest::Approx(0.6));
  const std::vector<std::string> single{"x"};
  CHECK(consistency_confidence(single) == doctest::Approx(1.0));
  CHECK_THROWS_AS(consistency_confidence({}), std::invalid_argument);
}

TEST_CASE("log parsing validates records with line numbers") {
  CHECK_THROWS_WITH_AS(parse_observations_text("", "log"), doctest::Contains("no observations"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_observations_text("{oops", "log"), doctest::Contains("log:1"),
                       std::invalid_argument);
  const std::string bad_conf =
      "{\"agent\":\"a\",\"task\":\"t1\",\"confidence\":0.5,\"correct\":1}\n"
      "{\"agent\":\"b\",\"task\":\"t1\",\"confidence\":1.3,\"correct\":0}\n";
  CHECK_THROWS_WITH_AS(parse_observations_text(bad_conf, "log"), doctest::Contains("log:2"),
                       std::invalid_argument);
  const std::string dup =
      "{\"agent\":\"a\",\"task\":\"t1\",\"confidence\":0.5,\"correct\":1}\n"
      "{\"agent\":\"a\",\"task\":\"t1\",\"confidence\":0.6,\"correct\":0}\n";
  CHECK_THROWS_WITH_AS(parse_observations_text(dup, "log"), doctest::Contains("duplicate"),
                       std::invalid_argument);
  const std::string conflict =
      "{\"agent\":\"a\",\"task\":\"t1\",\"confidence\":0.5,\"correct\":1,\"answer_class\":\"x\"}\n"
      "{\"agent\":\"b\",\"task\":\"t1\",\"confidence\":0.6,\"correct\":0,\"answer_class\":\"x\"}\n";
  CHECK_THROWS_WITH_AS(parse_observations_text(conflict, "log"),
                       doctest::Contains("conflicting"), std::invalid_argument);
}

TEST_CASE("missing answer classes become singletons; consistency channel is optional") {
  const std::string text =
      "{\"agent\":\"a\",\"task\":\"t1\",\"confidence\":0.9,\"correct\":0}\n"
      "{\"agent\":\"b\",\"task\":\"t1\",\"confidence\":0.6,\"correct\":1,"
      "\"consistency_samples\":[\"u\",\"u\",\"v\",\"u\"]}\n";
  const auto obs = parse_observations_text(text, "log");
  const auto tasks = group_into_tasks(obs);
  REQUIRE(tasks.size() == 1);
  CHECK(tasks[0].responses[0].answer_class == "~a");
  CHECK(tasks[0].responses[1].answer_class == "~b");
  // Voting over singletons reduces to argmax over confidence.
  std::map<std::string, double> conf{{"a", 0.9}, {"b", 0.6}};
  CHECK(select_answer(tasks[0], conf).chosen_answer_class == "~a");

  const auto with_cons = parse_observations_text(text, "log", true);
  CHECK(with_cons[0].confidence == doctest::Approx(0.9));   // no samples: untouched
  CHECK(with_cons[1].confidence == doctest::Approx(0.75));  // 3 of 4 match
}

TEST_CASE("observation jsonl round-trips through write and parse") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 41);
  auto stream = generate(spec);
  stream.resize(200);
  const fs::path path = temp_dir() / "roundtrip.jsonl";
  write_observations(path, stream);
  const ParsedLog log = parse_log(path);
  REQUIRE(log.observations.size() == stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    CHECK(log.observations[i].agent == stream[i].agent);
    CHECK(log.observations[i].confidence == stream[i].confidence);
    CHECK(log.observations[i].phase == stream[i].phase);
  }
  CHECK_THROWS_AS(parse_log(temp_dir() / "does-not-exist.jsonl"), std::invalid_argument);
}

TEST_CASE("paired bootstrap degenerate and seeded cases") {
  const std::vector<double> a{0.5, 0.5, 0.5, 0.5};
  const auto zero = paired_bootstrap(a, a, 2000, 7);
  CHECK(zero.delta_mean == 0.0);
  CHECK(zero.ci_low == 0.0);
  CHECK(zero.ci_high == 0.0);

  std::vector<double> b;
  for (double x : a) b.push_back(x - 0.125);
  const auto constant = paired_bootstrap(a, b, 2000, 7);
  CHECK(constant.delta_mean == doctest::Approx(0.125));
  CHECK(constant.ci_low == doctest::Approx(0.125));
  CHECK(constant.ci_high == doctest::Approx(0.125));

  CHECK_THROWS_AS(paired_bootstrap(a, std::vector<double>{1.0}, 100, 1), std::invalid_argument);

  // Two-point difference vector, fixed seed: exact match against an
  // independent re-implementation of the documented resampling scheme.
  std::vector<double> hi(100, 0.0), lo(100, 0.0);
  for (int i = 0; i < 50; ++i) hi[static_cast<std::size_t>(i)] = 1.0;
  const std::uint64_t seed = 424242;
  const std::int64_t samples = 10000;
  const auto ci = paired_bootstrap(hi, lo, samples, seed);

  Rng rng(seed);
  std::vector<double> means;
  for (std::int64_t s = 0; s < samples; ++s) {
    double sum = 0.0;
    for (int k = 0; k < 100; ++k) sum += hi[rng.uniform_below(100)] - 0.0;
    means.push_back(sum / 100.0);
  }
  std::sort(means.begin(), means.end());
  const double expect_lo = means[static_cast<std::size_t>(std::llround(0.025 * (samples - 1)))];
  const double expect_hi = means[static_cast<std::size_t>(std::llround(0.975 * (samples - 1)))];
  CHECK(ci.ci_low == expect_lo);
  CHECK(ci.ci_high == expect_hi);
  CHECK(ci.ci_low > 0.38);
  CHECK(ci.ci_low < 0.42);
  CHECK(ci.ci_high > 0.58);
  CHECK(ci.ci_high < 0.62);
}

TEST_CASE("shift protocol: zero shift keeps every method calibrated") {
  const ScenarioSpec spec = make_shift_scenario(0.0, 51);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  const auto p2 = tasks_for_phase(stream, "p2");
  ShiftOptions options;
  options.shuffles = 6;
  options.seed = 510;
  const ExperimentReport report = run_shift(p1, p2, CalibratorConfig{}, options);
  for (const auto& m : report.methods) CHECK(report.summary.at(m).mean < 0.06);
}

TEST_CASE("shift protocol: severe shift separates the online calibrator from frozen fits") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 52);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  const auto p2 = tasks_for_phase(stream, "p2");
  ShiftOptions options;
  options.shuffles = 6;
  options.seed = 520;
  const ExperimentReport report = run_shift(p1, p2, CalibratorConfig{}, options);
  const double margin_ece = report.summary.at("margin").mean;
  CHECK(report.summary.at("raw").mean > 0.3);
  for (const char* m : {"temperature", "platt", "histogram"})
    CHECK(report.summary.at(m).mean > 0.25);
  CHECK(margin_ece < 0.1);
  // Deltas are margin minus the others, so they are negative here.
  for (const auto& d : report.deltas) CHECK(d.delta_mean < 0.0);
}

TEST_CASE("shift protocol: single shuffle with a fixed seed is deterministic") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 53);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  const auto p2 = tasks_for_phase(stream, "p2");
  ShiftOptions options;
  options.shuffles = 1;
  options.seed = 530;
  const auto r1 = run_shift(p1, p2, CalibratorConfig{}, options);
  const auto r2 = run_shift(p1, p2, CalibratorConfig{}, options);
  CHECK(to_json_text(r1) == to_json_text(r2));
  // Parallel execution changes nothing.
  options.shuffles = 8;
  options.jobs = 1;
  const auto serial = run_shift(p1, p2, CalibratorConfig{}, options);
  options.jobs = 4;
  const auto parallel = run_shift(p1, p2, CalibratorConfig{}, options);
  CHECK(to_json_text(serial) == to_json_text(parallel));
}

TEST_CASE("online state carries across the phase boundary without resetting") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 54);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  CalibratorConfig cfg;
  Pool pool(cfg);
  for (const auto& task : p1)
    for (const auto& r : task.responses) pool.observe(r.agent, r.confidence, r.correct);
  const std::string end_of_phase1 = save_snapshot(pool);
  // Feeding phase 2 resumes from exactly this state; nothing in between.
  const Pool resumed = load_snapshot(end_of_phase1);
  CHECK(resumed == pool);
}

TEST_CASE("transfer ordering: from-scratch < transferred < raw on a wrong-prior target") {
  const auto [source, target] = make_transfer_scenarios(61);
  const auto source_tasks = group_into_tasks(generate(source));
  const auto target_tasks = group_into_tasks(generate(target));
  ShiftOptions options;
  options.shuffles = 6;
  options.seed = 610;
  const ExperimentReport report =
      run_transfer(source_tasks, target_tasks, CalibratorConfig{}, options);
  const double raw = report.summary.at("raw").mean;
  const double transferred = report.summary.at("transferred").mean;
  const double scratch = report.summary.at("from_scratch").mean;
  CHECK(scratch < transferred);
  CHECK(transferred < raw);
  CHECK(report.freeze_verified);
}

TEST_CASE("transfer on identical distributions: transferred matches from-scratch") {
  const ScenarioSpec spec = make_shift_scenario(0.0, 62);
  const auto stream = generate(spec);
  const auto tasks = group_into_tasks(stream);
  const std::span<const TaskResponses> all(tasks);
  const auto half = all.size() / 2;
  ShiftOptions options;
  options.shuffles = 8;
  options.seed = 620;
  const ExperimentReport report = run_transfer(all.subspan(0, half), all.subspan(half),
                                               CalibratorConfig{}, options);
  const auto& t = report.summary.at("transferred");
  const auto& s = report.summary.at("from_scratch");
  CHECK(t.ci_low <= s.ci_high);
  CHECK(s.ci_low <= t.ci_high);
}

TEST_CASE("dynamic pool: dropout stability and rolling degeneracy") {
  const CalibratorConfig cfg;
  DynamicPoolOptions options;
  options.shuffles = 8;
  options.seed = 71;
  options.length = 600;
  options.event_at = 300;
  const DynamicPoolReport dropout = run_dynamic_pool(
      PoolScenario::Dropout, make_pool_agents("dropout", 710), cfg, options);
  CHECK(dropout.dropout_pass);
  CHECK(dropout.series_mean.size() == dropout.series_steps.size());

  // Rolling with no swaps reduces to a plain run: identical windowed series to
  // a dropout run that never drops anyone.
  DynamicPoolOptions no_swap = options;
  no_swap.swap_every = 0;
  const ScenarioSpec roster = make_pool_agents("rolling", 720);
  const DynamicPoolReport plain_roll =
      run_dynamic_pool(PoolScenario::Rolling, roster, cfg, no_swap);
  DynamicPoolOptions no_drop = options;
  no_drop.drop_count = 0;
  const DynamicPoolReport plain_drop =
      run_dynamic_pool(PoolScenario::Dropout, roster, cfg, no_drop);
  REQUIRE(plain_roll.series_mean.size() == plain_drop.series_mean.size());
  for (std::size_t i = 0; i < plain_roll.series_mean.size(); ++i)
    CHECK(plain_roll.series_mean[i] == plain_drop.series_mean[i]);
}

TEST_CASE("dynamic pool: cold-start shrinkage beats no-shrinkage at every checkpoint") {
  const CalibratorConfig cfg;
  DynamicPoolOptions options;
  options.shuffles = 10;
  options.seed = 73;
  const DynamicPoolReport report = run_dynamic_pool(
      PoolScenario::ColdStart, make_pool_agents("coldstart", 730), cfg, options);
  REQUIRE(report.shrink_ece.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) CHECK(report.shrink_ece[c] < report.no_shrink_ece[c]);
  CHECK(report.coldstart_pass);
}

TEST_CASE("ablation: one cell reproduces a direct shift run; interior alpha optimum") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 81);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  const auto p2 = tasks_for_phase(stream, "p2");
  ShiftOptions options;
  options.shuffles = 4;
  options.seed = 810;

  AblationAxis axis;
  axis.kind = AblationAxis::Kind::Alpha;
  axis.values = {0.04};
  const AblationReport single = run_ablation(axis, p1, p2, CalibratorConfig{}, options);
  const ExperimentReport direct = run_shift(p1, p2, CalibratorConfig{}, options);
  REQUIRE(single.cells.size() == 1);
  CHECK(single.cells[0].methods.at("margin").mean == direct.summary.at("margin").mean);

  // Drifting stream: the middle learning rate wins over too-slow and too-noisy.
  const ScenarioSpec drift = make_drift_scenario(82);
  const auto drift_stream = generate(drift);
  const auto d1 = tasks_for_phase(drift_stream, "p1");
  const auto d2 = tasks_for_phase(drift_stream, "p2");
  axis.values = {0.005, 0.04, 0.5};
  const AblationReport sweep = run_ablation(axis, d1, d2, CalibratorConfig{}, options);
  const double slow = sweep.cells[0].methods.at("margin").mean;
  const double mid = sweep.cells[1].methods.at("margin").mean;
  const double fast = sweep.cells[2].methods.at("margin").mean;
  CHECK(mid < slow);
  CHECK(mid < fast);

  // Symmetric beats both asymmetric orientations on a mild-shift stream.
  const ScenarioSpec mild = make_shift_scenario(0.1, 83);
  const auto mild_stream = generate(mild);
  const auto m1 = tasks_for_phase(mild_stream, "p1");
  const auto m2 = tasks_for_phase(mild_stream, "p2");
  AblationAxis asym;
  asym.kind = AblationAxis::Kind::Asymmetric;
  asym.pairs = {{0.04, 0.04}, {0.02, 0.08}, {0.08, 0.02}};
  const AblationReport asym_report = run_ablation(asym, m1, m2, CalibratorConfig{}, options);
  const double symmetric = asym_report.cells[0].methods.at("margin").mean;
  CHECK(symmetric < asym_report.cells[1].methods.at("margin").mean);
  CHECK(symmetric < asym_report.cells[2].methods.at("margin").mean);
}

TEST_CASE("report writers emit deterministic text") {
  const ScenarioSpec spec = make_shift_scenario(0.4, 91);
  const auto stream = generate(spec);
  const auto p1 = tasks_for_phase(stream, "p1");
  const auto p2 = tasks_for_phase(stream, "p2");
  ShiftOptions options;
  options.shuffles = 2;
  options.seed = 910;
  const ExperimentReport report = run_shift(p1, p2, CalibratorConfig{}, options);
  CHECK(to_json_text(report) == to_json_text(report));
  const std::string csv = per_shuffle_csv(report);
  CHECK(csv.find("shuffle,raw,temperature,platt,histogram,margin") == 0);
  const std::string rel = reliability_csv(report.reliability.at("margin"));
  CHECK(rel.find("bin_low,bin_high,count,mean_conf,mean_acc") == 0);
  // Ordering-sensitivity spread is reported.
  CHECK(std::isfinite(report.summary.at("margin").stdev));
}
