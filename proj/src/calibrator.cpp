#include "margin/calibrator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace margin {

void CalibratorConfig::validate() const {
  if (!(alpha_up > 0.0 && alpha_up < 1.0))
    throw std::invalid_argument("alpha_up must be in (0,1), got " + std::to_string(alpha_up));
  if (!(alpha_down > 0.0 && alpha_down < 1.0))
    throw std::invalid_argument("alpha_down must be in (0,1), got " + std::to_string(alpha_down));
  if (band_count < 1)
    throw std::invalid_argument("band_count must be >= 1, got " + std::to_string(band_count));
  if (!(shrinkage >= 0.0))
    throw std::invalid_argument("shrinkage must be >= 0, got " + std::to_string(shrinkage));
  if (!(confidence_epsilon > 0.0 && confidence_epsilon < 0.01))
    throw std::invalid_argument("confidence_epsilon must be in (0, 0.01), got " +
                                std::to_string(confidence_epsilon));
}

AgentCalibrator make_agent_calibrator(int band_count) {
  AgentCalibrator cal;
  cal.bands.reserve(static_cast<std::size_t>(band_count));
  for (int k = 1; k <= band_count; ++k) {
    const double m = band_midpoint(k, band_count);
    cal.bands.push_back(AgentBandState{m, m, 0});
  }
  return cal;
}

int band_index(double confidence, int band_count) {
  if (band_count < 1)
    throw std::invalid_argument("band_count must be >= 1, got " + std::to_string(band_count));
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence out of range [0,1]: " + std::to_string(confidence));
  const int idx = static_cast<int>(confidence * band_count) + 1;
  return idx > band_count ? band_count : idx;
}

double band_midpoint(int band, int band_count) {
  return (static_cast<double>(band) - 0.5) / static_cast<double>(band_count);
}

AgentBandState update(const AgentBandState& state, double confidence, int outcome,
                      const CalibratorConfig& config) {
  if (!(confidence >= 0.0 && confidence <= 1.0))
    throw std::invalid_argument("confidence out of range [0,1]: " + std::to_string(confidence));
  if (outcome != 0 && outcome != 1)
    throw std::invalid_argument("outcome must be 0 or 1, got " + std::to_string(outcome));
  const double alpha = outcome == 1 ? config.alpha_up : config.alpha_down;
  AgentBandState next;
  next.acc_hat = (1.0 - alpha) * state.acc_hat + alpha * static_cast<double>(outcome);
  next.conf_bar = (1.0 - alpha) * state.conf_bar + alpha * confidence;
  next.n_obs = state.n_obs + 1;
  return next;
}

double band_factor(const AgentBandState& state, double epsilon) {
  return state.acc_hat / std::max(state.conf_bar, epsilon);
}

double effective_factor(const AgentCalibrator& calibrator, int band,
                        std::optional<double> pool_prior, const CalibratorConfig& config) {
  if (band < 1 || static_cast<std::size_t>(band) > calibrator.bands.size())
    throw std::invalid_argument("band index out of range: " + std::to_string(band));
  const AgentBandState& cell = calibrator.bands[static_cast<std::size_t>(band - 1)];
  const double gamma_band = band_factor(cell, config.confidence_epsilon);
  if (config.shrinkage == 0.0) return gamma_band;

  double gamma_prior;
  if (config.prior_source == PriorSource::PoolLevel) {
    if (!pool_prior)
      throw std::invalid_argument("pool_prior required when prior_source is pool_level");
    gamma_prior = *pool_prior;
  } else {
    gamma_prior = band_factor(calibrator.model_level, config.confidence_epsilon);
  }
  const double n = static_cast<double>(cell.n_obs);
  const double w = n / (n + config.shrinkage);
  return w * gamma_band + (1.0 - w) * gamma_prior;
}

double calibrate(const AgentCalibrator& calibrator, double confidence,
                 const CalibratorConfig& config, std::optional<double> pool_prior) {
  const int band = band_index(confidence, config.band_count);
  const double factor = effective_factor(calibrator, band, pool_prior, config);
  return std::clamp(factor * confidence, 0.0, 1.0);
}

Pool::Pool(CalibratorConfig config) : config_(config) { config_.validate(); }

const AgentCalibrator* Pool::find(const std::string& agent) const {
  const auto it = calibrators_.find(agent);
  return it == calibrators_.end() ? nullptr : &it->second;
}

AgentCalibrator& Pool::agent_state(const std::string& agent) {
  const auto it = calibrators_.find(agent);
  if (it != calibrators_.end()) return it->second;
  return calibrators_.emplace(agent, make_agent_calibrator(config_.band_count)).first->second;
}

void Pool::observe(const std::string& agent, double confidence, int outcome) {
  AgentCalibrator& cal = agent_state(agent);
  const int band = band_index(confidence, config_.band_count);
  auto& cell = cal.bands[static_cast<std::size_t>(band - 1)];
  cell = update(cell, confidence, outcome, config_);
  cal.model_level = update(cal.model_level, confidence, outcome, config_);
}

double Pool::calibrate(const std::string& agent, double confidence,
                       std::optional<double> pool_prior) const {
  if (const AgentCalibrator* cal = find(agent))
    return margin::calibrate(*cal, confidence, config_, pool_prior);
  const AgentCalibrator fresh = make_agent_calibrator(config_.band_count);
  return margin::calibrate(fresh, confidence, config_, pool_prior);
}

double Pool::effective_factor(const std::string& agent, int band,
                              std::optional<double> pool_prior) const {
  if (const AgentCalibrator* cal = find(agent))
    return margin::effective_factor(*cal, band, pool_prior, config_);
  const AgentCalibrator fresh = make_agent_calibrator(config_.band_count);
  return margin::effective_factor(fresh, band, pool_prior, config_);
}

double Pool::pool_band_prior(int band, std::span<const std::string> active_agents,
                             std::string_view exclude) const {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto& id : active_agents) {
    if (id == exclude) continue;
    const AgentCalibrator* cal = find(id);
    if (cal == nullptr) continue;
    if (band < 1 || static_cast<std::size_t>(band) > cal->bands.size()) continue;
    const auto& cell = cal->bands[static_cast<std::size_t>(band - 1)];
    if (cell.n_obs > 0) {
      sum += band_factor(cell, config_.confidence_epsilon);
      ++n;
    }
  }
  if (n > 0) return sum / static_cast<double>(n);
  for (const auto& id : active_agents) {
    if (id == exclude) continue;
    const AgentCalibrator* cal = find(id);
    if (cal != nullptr && cal->model_level.n_obs > 0) {
      sum += band_factor(cal->model_level, config_.confidence_epsilon);
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 1.0;
}

}  // namespace margin
