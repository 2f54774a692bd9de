#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace margin {

// One (confidence, outcome) point, the unit of calibration metrics.
struct Prediction {
  double confidence = 0.0;
  int correct = 0;
};

// One log record: an agent's response to one task.
struct Observation {
  std::string agent;
  std::string task;
  double confidence = 0.0;
  int correct = 0;
  std::optional<std::string> answer_class;
  std::optional<std::string> phase;
  std::optional<std::vector<std::string>> consistency_samples;
};

struct Response {
  std::string agent;
  std::string answer_class;
  double confidence = 0.0;
  int correct = 0;
};

// All responses to one task. Agents are distinct; responses sharing an answer
// class must share the correctness flag.
struct TaskResponses {
  std::string task_id;
  std::vector<Response> responses;
};

// Throws std::invalid_argument on any violated invariant.
void validate_task(const TaskResponses& task);

// Groups observations into tasks in first-appearance order. Records without an
// answer class get a per-response singleton class ("~" + agent id), so that
// confidence-weighted voting reduces to argmax over calibrated confidence.
std::vector<TaskResponses> group_into_tasks(std::span<const Observation> observations);

// Groups only the observations carrying the given phase tag.
std::vector<TaskResponses> tasks_for_phase(std::span<const Observation> observations,
                                           std::string_view phase_tag);

}  // namespace margin
