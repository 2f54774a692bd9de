#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "margin/rng.hpp"
#include "margin/types.hpp"

namespace margin {

// Rule producing the stated confidence for each task.
struct ConfidenceLaw {
  enum class Kind { Constant, Uniform, Biased };
  Kind kind = Kind::Biased;
  double value = 0.8;              // Constant
  double low = 0.0, high = 1.0;    // Uniform
  double bias = 0.0;               // Biased: confidence = accuracy + bias
  double jitter = 0.0;             // +- uniform jitter (Constant and Biased)
};

struct ShiftEvent {
  std::int64_t at_obs = 1;  // first observation (1-based, per agent) using the new accuracy
  double accuracy = 0.5;
};

struct AgentProfile {
  std::string id;
  double accuracy = 0.5;
  std::vector<double> band_accuracy;  // optional per-band accuracy (overrides scalar)
  ConfidenceLaw confidence;
  double drift = 0.0;  // per-observation accuracy change, clamped to [0.02, 0.98]
  std::vector<ShiftEvent> shifts;
  std::int64_t join_at = 1;  // first task index (1-based) the agent responds to
  std::optional<std::int64_t> leave_at;  // first task index it no longer responds to
};

struct ScenarioSpec {
  std::vector<AgentProfile> agents;
  std::int64_t length = 0;
  std::uint64_t seed = 0;
  std::int64_t shuffle_count = 100;
  std::int64_t replication_count = 10000;
  std::optional<std::int64_t> phase_split;  // tasks <= split tagged "p1", rest "p2"

  void validate() const;  // throws std::invalid_argument
};

inline constexpr double kAccuracyFloor = 0.02;
inline constexpr double kAccuracyCeil = 0.98;

// Stateful per-agent stream: own RNG substream, accuracy evolution (drift and
// shifts indexed by the agent's own observation count). Pool events never
// perturb another agent's draws.
class AgentSampler {
 public:
  AgentSampler(AgentProfile profile, std::uint64_t seed, int band_count = 3);

  Observation next(std::string task_id, std::optional<std::string> phase = {});
  std::int64_t observation_count() const { return count_; }
  const std::string& id() const { return profile_.id; }
  double current_accuracy() const { return theta_; }

 private:
  AgentProfile profile_;
  Rng rng_;
  int band_count_;
  std::int64_t count_ = 0;
  double theta_;
};

// Materializes the scripted stream: every active agent responds to every task;
// outcomes are Bernoulli draws, confidences follow each agent's law.
// Deterministic given the spec's seed.
std::vector<Observation> generate(const ScenarioSpec& spec);

// Cohort whose stated confidence is anti-correlated with accuracy, including
// one near-certain agent that is almost never right. Construction is checked
// at build time: profile-level correlation < -0.2 and raw pairwise resolution
// < 0.5 on a probe stream.
ScenarioSpec make_inverted_cohort(int agent_count, double difficulty = 1.0,
                                  std::uint64_t seed = 20240001u, std::int64_t length = 500);

// Two-phase stream (250 + 500 tasks, 4 agents) whose accuracy drops by
// `accuracy_drop` at the phase boundary while stated confidence is unchanged.
ScenarioSpec make_shift_scenario(double accuracy_drop, std::uint64_t seed);

// Source/target pair for transfer runs: same agents, target accuracy lower
// while stated confidence stays at the source level.
std::pair<ScenarioSpec, ScenarioSpec> make_transfer_scenarios(std::uint64_t seed);

// Agent rosters for the dynamic-pool scenarios: "dropout", "coldstart"
// (newcomers join at task 501), "rolling".
ScenarioSpec make_pool_agents(std::string_view scenario, std::uint64_t seed);

// Single-direction drifting stream for learning-rate sweeps.
ScenarioSpec make_drift_scenario(std::uint64_t seed);

ScenarioSpec scenario_from_json_text(std::string_view text);
ScenarioSpec load_scenario(const std::filesystem::path& path);
std::string scenario_to_json_text(const ScenarioSpec& spec);

}  // namespace margin
