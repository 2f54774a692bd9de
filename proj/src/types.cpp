#include "margin/types.hpp"

#include <map>
#include <set>
#include <stdexcept>

namespace margin {

void validate_task(const TaskResponses& task) {
  if (task.responses.empty())
    throw std::invalid_argument("task '" + task.task_id + "' has no responses");
  std::set<std::string> agents;
  std::map<std::string, int> class_correct;
  for (const auto& r : task.responses) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
      throw std::invalid_argument("task '" + task.task_id + "': confidence out of range for agent '" +
                                  r.agent + "'");
    if (r.correct != 0 && r.correct != 1)
      throw std::invalid_argument("task '" + task.task_id + "': correct flag must be 0 or 1");
    if (!agents.insert(r.agent).second)
      throw std::invalid_argument("task '" + task.task_id + "': duplicate response from agent '" +
                                  r.agent + "'");
    const auto [it, inserted] = class_correct.emplace(r.answer_class, r.correct);
    if (!inserted && it->second != r.correct)
      throw std::invalid_argument("task '" + task.task_id + "': answer class '" + r.answer_class +
                                  "' has conflicting correct flags");
  }
}

std::vector<TaskResponses> group_into_tasks(std::span<const Observation> observations) {
  std::vector<TaskResponses> tasks;
  std::map<std::string, std::size_t> index_of;
  for (const auto& obs : observations) {
    auto it = index_of.find(obs.task);
    if (it == index_of.end()) {
      it = index_of.emplace(obs.task, tasks.size()).first;
      tasks.push_back(TaskResponses{obs.task, {}});
    }
    Response r;
    r.agent = obs.agent;
    r.answer_class = obs.answer_class ? *obs.answer_class : "~" + obs.agent;
    r.confidence = obs.confidence;
    r.correct = obs.correct;
    tasks[it->second].responses.push_back(std::move(r));
  }
  for (const auto& t : tasks) validate_task(t);
  return tasks;
}

std::vector<TaskResponses> tasks_for_phase(std::span<const Observation> observations,
                                           std::string_view phase_tag) {
  std::vector<Observation> filtered;
  for (const auto& obs : observations)
    if (obs.phase && *obs.phase == phase_tag) filtered.push_back(obs);
  return group_into_tasks(filtered);
}

}  // namespace margin
