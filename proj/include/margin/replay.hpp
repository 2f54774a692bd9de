#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "margin/calibrator.hpp"
#include "margin/selection.hpp"
#include "margin/stats.hpp"
#include "margin/synthetic.hpp"
#include "margin/types.hpp"

namespace margin {

// ---------------------------------------------------------------------------
// Log ingestion (JSON lines, one record per line, LF endings).

struct ParsedLog {
  std::vector<Observation> observations;
};

// Validates every record; errors carry the file name and line number. With
// use_consistency set, records carrying consistency samples get their
// confidence replaced by the agreement fraction.
ParsedLog parse_log(const std::filesystem::path& path, bool use_consistency = false);
std::vector<Observation> parse_observations_text(std::string_view text,
                                                 std::string_view source_name,
                                                 bool use_consistency = false);

std::string observation_to_jsonl(const Observation& obs);
void write_observations(const std::filesystem::path& path, std::span<const Observation> obs);

// Fraction of samples matching the first one, including itself.
double consistency_confidence(std::span<const std::string> samples);

// ---------------------------------------------------------------------------
// Statistical plumbing.

struct BootstrapCi {
  double delta_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Percentile CI of mean(a - b) over `samples` resamples of the aligned index
// set. Resampling scheme (pinned for reproducibility): indices are drawn with
// Rng(seed).uniform_below(n), one pass of n draws per resample; the interval
// is the nearest-rank 2.5/97.5 percentile of the sorted resampled means.
BootstrapCi paired_bootstrap(std::span<const double> a, std::span<const double> b,
                             std::int64_t samples = 10000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Experiment protocols.

struct PairedDelta {
  std::string method_a;
  std::string method_b;
  double delta_mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::int64_t shuffles = 0;
  int bins = 10;
  std::vector<std::string> methods;  // presentation order
  std::map<std::string, MetricSummary> summary;
  std::map<std::string, std::vector<double>> per_shuffle;
  std::vector<PairedDelta> deltas;
  std::map<std::string, ReliabilityBins> reliability;  // from shuffle 0
  bool freeze_verified = false;  // transfer runs: frozen factors byte-compared
};

struct ShiftOptions {
  std::int64_t shuffles = 100;
  std::uint64_t seed = 0;
  int bins = 10;
  std::int64_t bootstrap_samples = 10000;
  int jobs = 1;
};

// Two-phase shift protocol. Per shuffle: the online calibrator runs through
// shuffled phase 1 then shuffled phase 2 without resetting and its phase-2
// calibrated predictions are scored; each design-time baseline is fitted per
// agent on a random half of that agent's phase-1 observations and applied
// frozen to phase 2; raw is the identity. Reported metric: pooled phase-2 ECE.
ExperimentReport run_shift(std::span<const TaskResponses> phase1,
                           std::span<const TaskResponses> phase2,
                           const CalibratorConfig& config, const ShiftOptions& options);

// Three-arm transfer protocol on the target stream: raw; factors learned on
// the source then frozen; and from-scratch online learning on the target.
ExperimentReport run_transfer(std::span<const TaskResponses> source,
                              std::span<const TaskResponses> target,
                              const CalibratorConfig& config, const ShiftOptions& options);

// ---------------------------------------------------------------------------
// Dynamic agent pools.

enum class PoolScenario { Dropout, ColdStart, Rolling };

PoolScenario pool_scenario_from_name(std::string_view name);
std::string pool_scenario_name(PoolScenario scenario);

struct DynamicPoolOptions {
  std::int64_t shuffles = 50;
  std::uint64_t seed = 0;
  int bins = 10;
  std::int64_t length = 1000;
  std::int64_t window = 50;         // trailing window for the ensemble ECE series
  std::int64_t event_at = 500;      // drop point / newcomer join point
  std::int64_t drop_count = 2;
  std::int64_t swap_every = 200;    // rolling replacement period
  std::int64_t recent_window = 200; // "worst-calibrated" horizon
  std::vector<std::int64_t> checkpoints = {50, 100, 150, 200};
  std::int64_t bootstrap_samples = 10000;
  int jobs = 1;
};

struct DynamicPoolReport {
  PoolScenario scenario = PoolScenario::Dropout;
  std::uint64_t seed = 0;
  std::int64_t shuffles = 0, length = 0, window = 0;
  std::vector<std::int64_t> series_steps;
  std::vector<double> series_mean, series_std;  // windowed ensemble ECE across shuffles
  // Dropout: pre/post segment comparison.
  double pre_mean = 0.0, post_mean = 0.0, pooled_std = 0.0;
  bool dropout_pass = false;
  // Cold start: pooled newcomer cumulative ECE at checkpoints, both prior modes.
  std::vector<std::int64_t> checkpoints;
  std::vector<double> shrink_ece, no_shrink_ece;
  double established_reference = 0.0;
  bool coldstart_pass = false;
  // Rolling: post-warmup segment ECE and its trend.
  std::vector<std::pair<std::int64_t, std::int64_t>> segments;
  std::vector<double> segment_mean;
  double slope_mean = 0.0, slope_ci_low = 0.0, slope_ci_high = 0.0;
  bool rolling_pass = false;
};

// One observation per step from a uniformly scheduled active agent; 1000
// observations per run by default. Dropout removes the most-observed agents at
// the event point; cold start compares the pool-level shrinkage prior against
// no shrinkage on shared streams; rolling swaps out the worst-calibrated
// active agent (highest recent-window ECE) on a fixed period, benched agents
// returning with their state intact.
DynamicPoolReport run_dynamic_pool(PoolScenario scenario, const ScenarioSpec& agents,
                                   const CalibratorConfig& config,
                                   const DynamicPoolOptions& options);

// ---------------------------------------------------------------------------
// Hyperparameter ablation grids.

struct AblationAxis {
  enum class Kind { Alpha, Bands, Asymmetric, Shrinkage };
  Kind kind = Kind::Alpha;
  std::vector<double> values;                      // Alpha / Bands / Shrinkage
  std::vector<std::pair<double, double>> pairs;    // Asymmetric (up, down)
};

struct AblationCell {
  std::string label;
  std::map<std::string, MetricSummary> methods;
};

struct AblationReport {
  std::uint64_t seed = 0;
  std::vector<std::string> cell_labels;
  std::vector<AblationCell> cells;
};

// Runs the shift protocol once per grid cell with the axis value substituted
// into the base configuration.
AblationReport run_ablation(const AblationAxis& axis, std::span<const TaskResponses> phase1,
                            std::span<const TaskResponses> phase2,
                            const CalibratorConfig& base, const ShiftOptions& options);

}  // namespace margin
