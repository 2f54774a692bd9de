// Acceptance suite: every release criterion with its tolerance pinned in code,
// one pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "margin/calibrator.hpp"
#include "margin/replay.hpp"
#include "margin/report.hpp"
#include "margin/rng.hpp"
#include "margin/selection.hpp"
#include "margin/stats.hpp"
#include "margin/synthetic.hpp"
#include "margin/types.hpp"
#include "margin/verify.hpp"

namespace fs = std::filesystem;
using namespace margin;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int number, std::string name, double budget_seconds)
      : number_(number), name_(std::move(name)), budget_(budget_seconds),
        start_(std::chrono::steady_clock::now()) {}

  void check(bool ok, const std::string& detail) {
    if (!ok) {
      pass_ = false;
      details_.push_back(detail);
    }
  }

  void finish() {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (elapsed > budget_) {
      pass_ = false;
      details_.push_back("runtime " + std::to_string(elapsed) + "s exceeds budget " +
                         std::to_string(budget_) + "s");
    }
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] criterion %2d: %s (%.2fs)",
                  pass_ ? "PASS" : "FAIL", number_, name_.c_str(), elapsed);
    std::cout << line << "\n";
    for (const auto& d : details_) std::cout << "         " << d << "\n";
    if (!pass_) ++g_failures;
  }

 private:
  int number_;
  std::string name_;
  double budget_;
  std::chrono::steady_clock::time_point start_;
  bool pass_ = true;
  std::vector<std::string> details_;
};

std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / "margin-acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

void criterion_1_closed_form() {
  Criterion c(1, "EWMA closed form within 1e-12, weight sum exact", 1.0);
  const ClosedFormReport r = verify_closed_form(20, 300, 101);
  c.check(r.max_abs_difference <= 1e-12,
          "max |iterated - expansion| = " + fmt(r.max_abs_difference));
  c.check(r.weight_sum_exact, "weight-sum fixed point drifted");
  c.finish();
}

void criterion_2_convergence() {
  Criterion c(2, "stationary mean within 4 SE, std in [0.052, 0.064]", 30.0);
  const ConvergenceReport r = verify_convergence(0.04, 0.79, 0.5, 2000, 10000, 102);
  c.check(r.mean_pass, "mean " + fmt(r.empirical_mean) + " vs " + fmt(r.predicted_mean) +
                           " (tol " + fmt(r.mean_tolerance) + ")");
  c.check(r.empirical_std >= 0.052 && r.empirical_std <= 0.064,
          "empirical std " + fmt(r.empirical_std) + " outside [0.052, 0.064]");
  c.check(r.variance_pass, "variance " + fmt(r.empirical_variance) + " vs predicted " +
                               fmt(r.predicted_variance) + " (5% rel)");
  c.finish();
}

void criterion_3_tracking() {
  Criterion c(3, "recovery after a 0.20 shift within 20% of the prediction", 30.0);
  const TrackingReport r = verify_tracking(0.04, 0.60, 0.20, 0.01, 10000, 103);
  c.check(r.empirical_recovery > 0, "never recovered");
  c.check(r.pass, "recovery " + std::to_string(r.empirical_recovery) + " vs predicted " +
                      fmt(r.predicted_recovery));
  c.finish();
}

void criterion_4_ushape() {
  Criterion c(4, "drift error bound holds on the full grid, interior minimum", 120.0);
  const UshapeReport r = verify_ushape({0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32}, 1.5e-4, 0.34,
                                       600, 1200, 600, 104);
  for (const auto& pt : r.points)
    c.check(pt.empirical_error <= pt.bound, "alpha " + fmt(pt.alpha) + ": error " +
                                                fmt(pt.empirical_error) + " > bound " +
                                                fmt(pt.bound));
  c.check(r.interior_minimum,
          "minimum sits at the grid edge (alpha " + fmt(r.points[r.argmin].alpha) + ")");
  c.finish();
}

void criterion_5_asymmetric() {
  Criterion c(5, "asymmetric fixed point 0.571 +- 0.01, symmetric control unbiased", 30.0);
  const AsymmetricReport biased = verify_asymmetric(0.02, 0.06, 0.8, 2500, 10000, 105);
  c.check(std::abs(biased.predicted_fixed_point - 0.016 / 0.028) < 1e-12,
          "predicted fixed point mismatch");
  c.check(std::abs(biased.empirical_fixed_point - biased.predicted_fixed_point) <= 0.01,
          "empirical " + fmt(biased.empirical_fixed_point) + " vs " +
              fmt(biased.predicted_fixed_point));
  const AsymmetricReport control = verify_asymmetric(0.04, 0.04, 0.8, 2500, 10000, 106);
  c.check(std::abs(control.empirical_fixed_point - 0.8) <= 0.01,
          "symmetric control " + fmt(control.empirical_fixed_point) + " vs 0.8");
  c.finish();
}

void criterion_6_selection_noise() {
  Criterion c(6, "selection probability matches the closed form and is monotone", 60.0);
  const SelectionMonotonicityReport r = verify_selection_monotonicity(
      {0.8, 0.6}, {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}, 200000, 107);
  for (const auto& pt : r.points)
    if (pt.sigma == 0.2) {
      c.check(std::abs(pt.predicted - 0.760) < 2e-3, "oracle at sigma 0.2: " + fmt(pt.predicted));
      c.check(std::abs(pt.empirical - pt.predicted) <= 0.01,
              "empirical " + fmt(pt.empirical) + " vs oracle " + fmt(pt.predicted));
    }
  c.check(r.monotone_pass, "selection probability not monotone in sigma");
  c.check(r.endpoint_pass, "endpoints (sigma 0 -> 1, large sigma -> 1/N) failed");
  c.check(r.closed_form_pass, "empirical/oracle gap above 0.01 somewhere on the grid");
  c.finish();
}

void criterion_7_inversion_rescue() {
  Criterion c(7, "inverted cohort: raw pairwise < 0.5, calibrated > 0.6", 60.0);
  const ScenarioSpec spec = make_inverted_cohort(6, 1.0, 20240001u, 500);
  std::vector<double> accs, confs;
  for (const auto& a : spec.agents) {
    accs.push_back(a.accuracy);
    confs.push_back(a.confidence.value);
  }
  c.check(pearson(confs, accs) < -0.2, "cohort correlation " + fmt(pearson(confs, accs)));

  const auto tasks = group_into_tasks(generate(spec));
  c.check(tasks.size() <= 500, "stream longer than 500 tasks");
  const CalibratorConfig config;
  const SuiteSummary raw = selection_suite(tasks, config, SuiteMode::Raw);
  const SuiteSummary cal = selection_suite(tasks, config, SuiteMode::Margin);
  c.check(raw.pairwise.has_value() && cal.pairwise.has_value(), "pairwise undefined");
  c.check(*raw.pairwise < 0.5, "raw pairwise " + fmt(*raw.pairwise));
  c.check(*cal.pairwise > 0.6, "calibrated pairwise " + fmt(*cal.pairwise));
  c.finish();
}

void criterion_8_shift() {
  Criterion c(8, "severe shift: online ECE < 1/3 of best frozen; zero shift all < 0.05", 300.0);
  ShiftOptions options;
  options.shuffles = 100;
  options.seed = 108;
  options.jobs = 2;
  {
    const auto stream = generate(make_shift_scenario(0.4, 1081));
    const auto p1 = tasks_for_phase(stream, "p1");
    const auto p2 = tasks_for_phase(stream, "p2");
    const ExperimentReport r = run_shift(p1, p2, CalibratorConfig{}, options);
    double best_frozen = 1.0;
    for (const char* m : {"temperature", "platt", "histogram"})
      best_frozen = std::min(best_frozen, r.summary.at(m).mean);
    const double margin_ece = r.summary.at("margin").mean;
    c.check(margin_ece < best_frozen / 3.0, "margin " + fmt(margin_ece) + " vs best frozen " +
                                                fmt(best_frozen));
  }
  {
    const auto stream = generate(make_shift_scenario(0.0, 1082));
    const auto p1 = tasks_for_phase(stream, "p1");
    const auto p2 = tasks_for_phase(stream, "p2");
    const ExperimentReport r = run_shift(p1, p2, CalibratorConfig{}, options);
    for (const auto& m : r.methods)
      c.check(r.summary.at(m).mean < 0.05,
              "zero shift: " + m + " ece " + fmt(r.summary.at(m).mean));
  }
  c.finish();
}

void criterion_9_transfer() {
  Criterion c(9, "transfer ordering: from-scratch < transferred < raw", 120.0);
  const auto [source_spec, target_spec] = make_transfer_scenarios(109);
  const auto source = group_into_tasks(generate(source_spec));
  const auto target = group_into_tasks(generate(target_spec));
  ShiftOptions options;
  options.shuffles = 100;
  options.seed = 1090;
  options.jobs = 2;
  const ExperimentReport r = run_transfer(source, target, CalibratorConfig{}, options);
  const double raw = r.summary.at("raw").mean;
  const double transferred = r.summary.at("transferred").mean;
  const double scratch = r.summary.at("from_scratch").mean;
  c.check(scratch < transferred,
          "from-scratch " + fmt(scratch) + " !< transferred " + fmt(transferred));
  c.check(transferred < raw, "transferred " + fmt(transferred) + " !< raw " + fmt(raw));
  c.check(r.freeze_verified, "frozen factors changed during target replay");
  c.finish();
}

void criterion_10_dynamic_pool() {
  Criterion c(10, "dropout stable, cold-start shrinkage wins, rolling trend-free", 300.0);
  const CalibratorConfig config;
  DynamicPoolOptions options;
  options.shuffles = 50;
  options.seed = 110;
  options.jobs = 2;

  const DynamicPoolReport drop =
      run_dynamic_pool(PoolScenario::Dropout, make_pool_agents("dropout", 1101), config, options);
  c.check(drop.dropout_pass, "dropout |" + fmt(drop.pre_mean) + " - " + fmt(drop.post_mean) +
                                 "| >= pooled std " + fmt(drop.pooled_std));

  const DynamicPoolReport cold = run_dynamic_pool(PoolScenario::ColdStart,
                                                  make_pool_agents("coldstart", 1102), config,
                                                  options);
  for (std::size_t i = 0; i < cold.checkpoints.size(); ++i)
    c.check(cold.shrink_ece[i] < cold.no_shrink_ece[i],
            "checkpoint " + std::to_string(cold.checkpoints[i]) + ": shrink " +
                fmt(cold.shrink_ece[i]) + " !< " + fmt(cold.no_shrink_ece[i]));

  const DynamicPoolReport roll =
      run_dynamic_pool(PoolScenario::Rolling, make_pool_agents("rolling", 1103), config, options);
  c.check(roll.rolling_pass, "segment slope CI [" + fmt(roll.slope_ci_low) + ", " +
                                 fmt(roll.slope_ci_high) + "] excludes 0");
  c.finish();
}

void criterion_11_bootstrap() {
  Criterion c(11, "paired bootstrap degenerate cases and independent resampler match", 10.0);
  std::vector<double> a(60, 0.37), b(60, 0.37);
  const BootstrapCi same = paired_bootstrap(a, b, 10000, 111);
  c.check(same.delta_mean == 0.0 && same.ci_low == 0.0 && same.ci_high == 0.0,
          "identical vectors CI not [0,0]");
  for (auto& x : b) x -= 0.2;
  const BootstrapCi constant = paired_bootstrap(a, b, 10000, 112);
  c.check(std::abs(constant.ci_low - 0.2) < 1e-12 && std::abs(constant.ci_high - 0.2) < 1e-12,
          "constant difference CI not degenerate at 0.2");

  std::vector<double> hi(100, 0.0), lo(100, 0.0);
  for (int i = 0; i < 50; ++i) hi[static_cast<std::size_t>(i)] = 1.0;
  const std::uint64_t seed = 113;
  const std::int64_t samples = 10000;
  const BootstrapCi ci = paired_bootstrap(hi, lo, samples, seed);
  // Independent re-implementation of the documented resampling scheme.
  Rng rng(seed);
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(samples));
  for (std::int64_t s = 0; s < samples; ++s) {
    double sum = 0.0;
    for (int k = 0; k < 100; ++k) sum += hi[rng.uniform_below(100)];
    means.push_back(sum / 100.0);
  }
  std::sort(means.begin(), means.end());
  const double expect_lo = means[static_cast<std::size_t>(std::llround(0.025 * (samples - 1)))];
  const double expect_hi = means[static_cast<std::size_t>(std::llround(0.975 * (samples - 1)))];
  c.check(ci.ci_low == expect_lo && ci.ci_high == expect_hi,
          "resampler mismatch: [" + fmt(ci.ci_low) + ", " + fmt(ci.ci_high) + "] vs [" +
              fmt(expect_lo) + ", " + fmt(expect_hi) + "]");
  c.check(ci.ci_low > 0.38 && ci.ci_low < 0.42 && ci.ci_high > 0.58 && ci.ci_high < 0.62,
          "two-point CI [" + fmt(ci.ci_low) + ", " + fmt(ci.ci_high) + "] far from [0.40, 0.60]");
  c.finish();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MARGIN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool same_files(const fs::path& a, const fs::path& b, std::vector<std::string>& diffs) {
  std::map<std::string, fs::path> files_a, files_b;
  for (const auto& e : fs::directory_iterator(a)) files_a[e.path().filename().string()] = e.path();
  for (const auto& e : fs::directory_iterator(b)) files_b[e.path().filename().string()] = e.path();
  bool same = true;
  for (const auto& [name, path] : files_a) {
    if (!files_b.count(name)) {
      diffs.push_back("missing in rerun: " + name);
      same = false;
      continue;
    }
    if (read_text_file(path) != read_text_file(files_b.at(name))) {
      diffs.push_back("differs: " + name);
      same = false;
    }
  }
  for (const auto& [name, _] : files_b)
    if (!files_a.count(name)) {
      diffs.push_back("extra in rerun: " + name);
      same = false;
    }
  return same;
}

void criterion_12_determinism() {
  Criterion c(12, "manifest re-runs reproduce every report byte-exactly, any --jobs", 300.0);
  const fs::path dir = scratch_dir();
  std::vector<std::string> diffs;

  // A log-driven replay: generate once, then replay, re-run from the manifest,
  // and replay again with a different parallelism level.
  const auto stream = generate(make_shift_scenario(0.4, 1201));
  write_observations(dir / "log.jsonl", stream);
  const std::string log = (dir / "log.jsonl").string();

  int rc = run_cli("replay --log " + log + " --shuffles 40 --seed 9 --out " +
                   (dir / "r1").string());
  c.check(rc == 0, "replay exited " + std::to_string(rc));
  rc = run_cli("report --manifest " + (dir / "r1" / "manifest.json").string() + " --out " +
               (dir / "r2").string());
  c.check(rc == 0, "report exited " + std::to_string(rc));
  c.check(same_files(dir / "r1", dir / "r2", diffs), "replay rerun not byte-identical");
  rc = run_cli("replay --log " + log + " --shuffles 40 --seed 9 --jobs 4 --out " +
               (dir / "r3").string());
  c.check(rc == 0, "parallel replay exited " + std::to_string(rc));
  c.check(same_files(dir / "r1", dir / "r3", diffs), "jobs=4 changed replay bytes");

  // The verifier path, twice.
  rc = run_cli("verify --prop 5 --theta 0.8 --up 0.02 --down 0.06 --seed 7 --out " +
               (dir / "v1").string());
  c.check(rc == 0, "verify exited " + std::to_string(rc));
  rc = run_cli("report --manifest " + (dir / "v1" / "manifest.json").string() + " --out " +
               (dir / "v2").string());
  c.check(rc == 0, "verify rerun exited " + std::to_string(rc));
  c.check(same_files(dir / "v1", dir / "v2", diffs), "verify rerun not byte-identical");

  // Simulation with a built-in cohort, re-run under higher parallelism.
  rc = run_cli("simulate --inverted 5 --shuffles 8 --out " + (dir / "s1").string());
  c.check(rc == 0, "simulate exited " + std::to_string(rc));
  rc = run_cli("report --manifest " + (dir / "s1" / "manifest.json").string() + " --jobs 3 --out " +
               (dir / "s2").string());
  c.check(rc == 0, "simulate rerun exited " + std::to_string(rc));
  c.check(same_files(dir / "s1", dir / "s2", diffs), "simulate rerun not byte-identical");

  // Exit-code contract: missing input is a validation error naming the path.
  const int missing = run_cli("replay --log " + (dir / "absent.jsonl").string() + " --out " +
                              (dir / "x").string());
  c.check(WEXITSTATUS(missing) == 1, "missing log exit code " + std::to_string(missing));

  for (const auto& d : diffs) c.check(false, d);
  c.finish();
}

}  // namespace

int main() {
  std::cout << "margin acceptance suite\n";
  criterion_1_closed_form();
  criterion_2_convergence();
  criterion_3_tracking();
  criterion_4_ushape();
  criterion_5_asymmetric();
  criterion_6_selection_noise();
  criterion_7_inversion_rescue();
  criterion_8_shift();
  criterion_9_transfer();
  criterion_10_dynamic_pool();
  criterion_11_bootstrap();
  criterion_12_determinism();
  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all criteria passed\n";
  return 0;
}
