#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace margin {

enum class PriorSource { ModelLevel, PoolLevel };

// Hyperparameters for one calibrator instance. Defaults: symmetric
// alpha = 0.04, K = 3 bands, shrinkage constant 100.
struct CalibratorConfig {
  double alpha_up = 0.04;    // learning rate applied on outcome = 1
  double alpha_down = 0.04;  // learning rate applied on outcome = 0
  int band_count = 3;
  double shrinkage = 100.0;  // k_s; 0 disables blending entirely
  double confidence_epsilon = 1e-6;
  PriorSource prior_source = PriorSource::ModelLevel;

  void validate() const;  // throws std::invalid_argument naming the field
  bool operator==(const CalibratorConfig&) const = default;
};

// EWMA pair plus observation count for one (agent, band) cell.
struct AgentBandState {
  double acc_hat = 0.0;
  double conf_bar = 0.0;
  std::int64_t n_obs = 0;
  bool operator==(const AgentBandState&) const = default;
};

// Per-agent state: K band cells plus one model-level aggregate cell that is
// updated on every observation with the same learning rate.
struct AgentCalibrator {
  std::vector<AgentBandState> bands;
  AgentBandState model_level{0.5, 0.5, 0};
  bool operator==(const AgentCalibrator&) const = default;
};

AgentCalibrator make_agent_calibrator(int band_count);

// Band of a stated confidence, 1-based. Bands are equal-width and half-open,
// except the top band which is closed at 1.
int band_index(double confidence, int band_count);

double band_midpoint(int band, int band_count);

// One EWMA step. The learning rate is alpha_up when outcome = 1 and
// alpha_down otherwise; both estimates stay in [0, 1].
AgentBandState update(const AgentBandState& state, double confidence, int outcome,
                      const CalibratorConfig& config);

// Raw calibration factor of one cell: acc_hat / max(conf_bar, epsilon).
double band_factor(const AgentBandState& state, double epsilon);

// Shrinkage-blended factor: (n/(n+k_s)) * band + (k_s/(n+k_s)) * prior, where
// the prior is the model-level factor or a supplied pool-level one. k_s = 0
// returns the band factor exactly, including at n = 0.
double effective_factor(const AgentCalibrator& calibrator, int band,
                        std::optional<double> pool_prior, const CalibratorConfig& config);

// Calibrated confidence: clamp(effective_factor * confidence, 0, 1). Identity
// before any observations.
double calibrate(const AgentCalibrator& calibrator, double confidence,
                 const CalibratorConfig& config, std::optional<double> pool_prior = {});

// The agent pool. Single-writer: observe() calls must be serialized (the EWMA
// is order-dependent); calibrate()/effective_factor() are pure reads. State
// moves between execution contexts via save_snapshot/load_snapshot.
class Pool {
 public:
  Pool() = default;
  explicit Pool(CalibratorConfig config);

  const CalibratorConfig& config() const { return config_; }

  // Routes the observation to the band of the stated confidence and updates
  // that band plus the model-level cell of exactly one agent. Unknown agents
  // are auto-registered with fresh state.
  void observe(const std::string& agent, double confidence, int outcome);

  double calibrate(const std::string& agent, double confidence,
                   std::optional<double> pool_prior = {}) const;
  double effective_factor(const std::string& agent, int band,
                          std::optional<double> pool_prior = {}) const;

  // Unweighted mean of the active agents' raw band factors (cells with
  // observations only), falling back to their model-level factors, then 1.
  double pool_band_prior(int band, std::span<const std::string> active_agents,
                         std::string_view exclude = {}) const;

  const AgentCalibrator* find(const std::string& agent) const;
  AgentCalibrator& agent_state(const std::string& agent);  // auto-creates
  const std::map<std::string, AgentCalibrator>& calibrators() const { return calibrators_; }

  bool operator==(const Pool&) const = default;

 private:
  CalibratorConfig config_{};
  std::map<std::string, AgentCalibrator> calibrators_;
};

// Snapshot: JSON document with floats serialized at 17 significant digits;
// round-trips bit-exactly.
std::string save_snapshot(const Pool& pool);
Pool load_snapshot(std::string_view json_text);

}  // namespace margin
