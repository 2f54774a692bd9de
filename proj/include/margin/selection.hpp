#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "margin/calibrator.hpp"
#include "margin/types.hpp"

namespace margin {

struct SelectionResult {
  std::string chosen_answer_class;
  int chosen_correct = 0;
  std::map<std::string, double> calibrated;  // per-agent confidences used in the vote
  int oracle_correct = 0;                    // 1 iff any response is correct
  double random_expected = 0.0;              // (#correct responses) / (#responses)
  int majority_correct = 0;                  // unweighted plurality, same tie rule
};

// Confidence-weighted voting: score(y) = sum of calibrated confidence over
// responses with answer class y; argmax wins, ties broken by smallest class id.
SelectionResult select_answer(const TaskResponses& task,
                              const std::map<std::string, double>& calibrated);

struct ReliabilityBin {
  double bin_low = 0.0;
  double bin_high = 0.0;
  std::int64_t count = 0;
  double mean_confidence = 0.0;
  double mean_accuracy = 0.0;
};

struct ReliabilityBins {
  int bin_count = 10;
  std::vector<ReliabilityBin> bins;
};

struct EceResult {
  double value = 0.0;
  ReliabilityBins bins;
};

// ECE over equal-width confidence bins (top bin closed, empty bins skipped),
// reported as a fraction in [0, 1].
EceResult expected_calibration_error(std::span<const Prediction> predictions, int bin_count = 10);

// Over all unordered agent pairs within a task whose answer classes differ and
// where exactly one agent is correct: 1 if the correct agent states strictly
// higher confidence, 0.5 on an exact tie, 0 otherwise. Mean over all qualifying
// pairs across the task list; nullopt when no pair qualifies.
std::optional<double> pairwise_resolution(std::span<const TaskResponses> tasks);
std::optional<double> pairwise_resolution(
    std::span<const TaskResponses> tasks,
    std::span<const std::map<std::string, double>> per_task_confidence);

enum class SuiteMode { Raw, Margin };

struct SuiteSummary {
  SuiteMode mode = SuiteMode::Raw;
  std::int64_t task_count = 0;
  double pass1 = 0.0;
  double oracle = 0.0;
  double random_expected = 0.0;
  double majority = 0.0;
  std::optional<double> pairwise;
  // (tasks seen, cumulative pass@1) at checkpoints 10/30/50/100/150/all.
  std::vector<std::pair<std::int64_t, double>> convergence;
};

// Online selection loop over tasks in stream order: calibrate (identity in raw
// mode), select, record, then feed every response's outcome back to a private
// pool (margin mode only). Pairwise resolution uses the confidences recorded
// at selection time.
SuiteSummary selection_suite(std::span<const TaskResponses> tasks, const CalibratorConfig& config,
                             SuiteMode mode);

}  // namespace margin
