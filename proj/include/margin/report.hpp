#pragma once

#include <filesystem>
#include <string>

#include "margin/replay.hpp"
#include "margin/selection.hpp"
#include "margin/verify.hpp"

namespace margin {

// Report emission. JSON for machines, CSV series for plotting. All output is
// deterministic: fixed key order, fixed float formatting, LF line endings, and
// the master seed embedded in every randomized report.

std::string to_json_text(const ExperimentReport& report);
std::string to_json_text(const DynamicPoolReport& report);
std::string to_json_text(const AblationReport& report);

struct VerifyBundle {
  std::vector<int> props;  // which checks ran, 1..6
  ClosedFormReport closed_form;
  ConvergenceReport convergence;
  TrackingReport tracking;
  UshapeReport ushape;
  AsymmetricReport asymmetric;
  SelectionMonotonicityReport selection;
  bool all_pass = true;
};
std::string to_json_text(const VerifyBundle& bundle);

// CSV: bin_low, bin_high, count, mean_conf, mean_acc (empty bins carry nan).
std::string reliability_csv(const ReliabilityBins& bins);

// CSV: shuffle index, one column per method.
std::string per_shuffle_csv(const ExperimentReport& report);

// CSV: step, mean, std of the windowed ensemble ECE.
std::string series_csv(const DynamicPoolReport& report);

// CSV: checkpoint, per-mode aggregate pass@1 / pairwise columns.
struct SuiteAggregate {
  std::uint64_t seed = 0;
  std::int64_t shuffles = 0;
  std::map<std::string, MetricSummary> pass1;
  std::map<std::string, MetricSummary> pairwise;
  std::vector<PairedDelta> deltas;
  std::vector<std::int64_t> checkpoints;
  std::map<std::string, std::vector<double>> convergence_mean;
  std::int64_t undefined_pairwise = 0;
};
std::string to_json_text(const SuiteAggregate& aggregate);
std::string convergence_csv(const SuiteAggregate& aggregate);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace margin
