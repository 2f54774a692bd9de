#include <cstdio>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "margin/calibrator.hpp"

namespace margin {
namespace {

// 17 significant digits round-trip any finite double exactly.
std::string f17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

void emit_cell(std::string& out, const AgentBandState& cell) {
  out += "{\"acc_hat\":";
  out += f17(cell.acc_hat);
  out += ",\"conf_bar\":";
  out += f17(cell.conf_bar);
  out += ",\"n_obs\":";
  out += std::to_string(cell.n_obs);
  out += "}";
}

AgentBandState parse_cell(const nlohmann::json& j) {
  AgentBandState cell;
  cell.acc_hat = j.at("acc_hat").get<double>();
  cell.conf_bar = j.at("conf_bar").get<double>();
  cell.n_obs = j.at("n_obs").get<std::int64_t>();
  return cell;
}

}  // namespace

std::string save_snapshot(const Pool& pool) {
  const CalibratorConfig& cfg = pool.config();
  std::string out = "{\"config\":{";
  out += "\"alpha_up\":" + f17(cfg.alpha_up);
  out += ",\"alpha_down\":" + f17(cfg.alpha_down);
  out += ",\"band_count\":" + std::to_string(cfg.band_count);
  out += ",\"shrinkage\":" + f17(cfg.shrinkage);
  out += ",\"confidence_epsilon\":" + f17(cfg.confidence_epsilon);
  out += ",\"prior_source\":\"";
  out += cfg.prior_source == PriorSource::PoolLevel ? "pool_level" : "model_level";
  out += "\"},\"agents\":{";
  bool first = true;
  for (const auto& [id, cal] : pool.calibrators()) {
    if (!first) out += ",";
    first = false;
    out += "\"" + escape(id) + "\":{\"bands\":[";
    for (std::size_t k = 0; k < cal.bands.size(); ++k) {
      if (k > 0) out += ",";
      emit_cell(out, cal.bands[k]);
    }
    out += "],\"model_level\":";
    emit_cell(out, cal.model_level);
    out += "}";
  }
  out += "}}";
  return out;
}

Pool load_snapshot(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("snapshot parse error: ") + e.what());
  }
  const auto& jc = j.at("config");
  CalibratorConfig cfg;
  cfg.alpha_up = jc.at("alpha_up").get<double>();
  cfg.alpha_down = jc.at("alpha_down").get<double>();
  cfg.band_count = jc.at("band_count").get<int>();
  cfg.shrinkage = jc.at("shrinkage").get<double>();
  cfg.confidence_epsilon = jc.at("confidence_epsilon").get<double>();
  const std::string prior = jc.at("prior_source").get<std::string>();
  if (prior == "model_level") {
    cfg.prior_source = PriorSource::ModelLevel;
  } else if (prior == "pool_level") {
    cfg.prior_source = PriorSource::PoolLevel;
  } else {
    throw std::invalid_argument("snapshot: unknown prior_source '" + prior + "'");
  }
  cfg.validate();

  Pool pool(cfg);
  for (const auto& [id, jcal] : j.at("agents").items()) {
    AgentCalibrator cal;
    const auto& jbands = jcal.at("bands");
    if (static_cast<int>(jbands.size()) != cfg.band_count)
      throw std::invalid_argument("snapshot: agent '" + id + "' has " +
                                  std::to_string(jbands.size()) + " bands, config says " +
                                  std::to_string(cfg.band_count));
    for (const auto& jb : jbands) cal.bands.push_back(parse_cell(jb));
    cal.model_level = parse_cell(jcal.at("model_level"));
    pool.agent_state(id) = cal;
  }
  return pool;
}

}  // namespace margin
