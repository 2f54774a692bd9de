#include "margin/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "margin/calibrator.hpp"
#include "margin/selection.hpp"
#include "margin/stats.hpp"

namespace margin {

void ScenarioSpec::validate() const {
  if (agents.empty()) throw std::invalid_argument("scenario: no agents");
  if (length < 1) throw std::invalid_argument("scenario: length must be >= 1");
  if (shuffle_count < 1) throw std::invalid_argument("scenario: shuffle_count must be >= 1");
  if (replication_count < 1) throw std::invalid_argument("scenario: replication_count must be >= 1");
  if (phase_split && (*phase_split < 1 || *phase_split >= length))
    throw std::invalid_argument("scenario: phase_split must lie inside the stream");
  std::vector<std::string> ids;
  for (const auto& a : agents) {
    if (a.id.empty()) throw std::invalid_argument("scenario: agent with empty id");
    ids.push_back(a.id);
    if (!(a.accuracy >= 0.0 && a.accuracy <= 1.0))
      throw std::invalid_argument("scenario: accuracy out of range for agent '" + a.id + "'");
    for (double th : a.band_accuracy)
      if (!(th >= 0.0 && th <= 1.0))
        throw std::invalid_argument("scenario: band accuracy out of range for agent '" + a.id + "'");
    if (a.join_at < 1)
      throw std::invalid_argument("scenario: join_at must be >= 1 for agent '" + a.id + "'");
    if (a.leave_at && *a.leave_at <= a.join_at)
      throw std::invalid_argument("scenario: leave_at must exceed join_at for agent '" + a.id + "'");
    for (const auto& s : a.shifts)
      if (s.at_obs < 1 || !(s.accuracy >= 0.0 && s.accuracy <= 1.0))
        throw std::invalid_argument("scenario: bad shift event for agent '" + a.id + "'");
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("scenario: duplicate agent id");
}

AgentSampler::AgentSampler(AgentProfile profile, std::uint64_t seed, int band_count)
    : profile_(std::move(profile)), rng_(seed), band_count_(band_count),
      theta_(profile_.accuracy) {
  std::sort(profile_.shifts.begin(), profile_.shifts.end(),
            [](const ShiftEvent& a, const ShiftEvent& b) { return a.at_obs < b.at_obs; });
}

Observation AgentSampler::next(std::string task_id, std::optional<std::string> phase) {
  ++count_;
  for (const auto& s : profile_.shifts)
    if (s.at_obs == count_) theta_ = s.accuracy;

  const ConfidenceLaw& law = profile_.confidence;
  double confidence = 0.0;
  switch (law.kind) {
    case ConfidenceLaw::Kind::Constant:
      confidence = law.value;
      break;
    case ConfidenceLaw::Kind::Uniform:
      confidence = rng_.uniform(law.low, law.high);
      break;
    case ConfidenceLaw::Kind::Biased:
      confidence = theta_ + law.bias;
      break;
  }
  if (law.jitter > 0.0 && law.kind != ConfidenceLaw::Kind::Uniform)
    confidence += rng_.uniform(-law.jitter, law.jitter);
  confidence = std::clamp(confidence, 0.01, 0.99);

  double theta_eff = theta_;
  if (!profile_.band_accuracy.empty()) {
    const int band = band_index(confidence, band_count_);
    const auto idx = static_cast<std::size_t>(
        std::min<int>(band, static_cast<int>(profile_.band_accuracy.size())) - 1);
    theta_eff = profile_.band_accuracy[idx];
  }
  const int outcome = rng_.bernoulli(theta_eff);

  if (profile_.drift != 0.0)
    theta_ = std::clamp(theta_ + profile_.drift, kAccuracyFloor, kAccuracyCeil);

  Observation obs;
  obs.agent = profile_.id;
  obs.task = std::move(task_id);
  obs.confidence = confidence;
  obs.correct = outcome;
  obs.answer_class = outcome == 1 ? std::string("Y") : "w:" + profile_.id;
  obs.phase = std::move(phase);
  return obs;
}

std::vector<Observation> generate(const ScenarioSpec& spec) {
  spec.validate();
  std::vector<AgentSampler> samplers;
  samplers.reserve(spec.agents.size());
  for (const auto& profile : spec.agents)
    samplers.emplace_back(profile, substream_seed(spec.seed, "agent:" + profile.id));

  std::vector<Observation> out;
  char buf[32];
  for (std::int64_t t = 1; t <= spec.length; ++t) {
    std::snprintf(buf, sizeof(buf), "t%06lld", static_cast<long long>(t));
    std::optional<std::string> phase;
    if (spec.phase_split) phase = t <= *spec.phase_split ? "p1" : "p2";
    for (std::size_t i = 0; i < samplers.size(); ++i) {
      const auto& profile = spec.agents[i];
      if (t < profile.join_at) continue;
      if (profile.leave_at && t >= *profile.leave_at) continue;
      out.push_back(samplers[i].next(buf, phase));
    }
  }
  return out;
}

ScenarioSpec make_inverted_cohort(int agent_count, double difficulty, std::uint64_t seed,
                                  std::int64_t length) {
  if (agent_count < 2) throw std::invalid_argument("inverted cohort needs at least 2 agents");
  difficulty = std::clamp(difficulty, 0.3, 1.0);

  ScenarioSpec spec;
  spec.seed = seed;
  spec.length = length;

  // Anchor: near-certain and almost never right.
  AgentProfile anchor;
  anchor.id = "a00";
  anchor.accuracy = 0.02;
  anchor.confidence = {ConfidenceLaw::Kind::Constant, 0.98, 0, 1, 0, 0.0};
  spec.agents.push_back(anchor);

  for (int i = 1; i < agent_count; ++i) {
    const double frac = agent_count > 2 ? static_cast<double>(i - 1) / (agent_count - 2) : 0.0;
    AgentProfile a;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "a%02d", i);
    a.id = buf;
    a.accuracy = 0.05 + 0.85 * frac;
    const double conf = std::clamp(0.95 - difficulty * 0.72 * frac, 0.05, 0.98);
    a.confidence = {ConfidenceLaw::Kind::Constant, conf, 0, 1, 0, 0.02};
    spec.agents.push_back(a);
  }

  // Verified at construction: nominal confidence against accuracy, and raw
  // pairwise resolution on a probe stream.
  std::vector<double> accs, confs;
  for (const auto& a : spec.agents) {
    accs.push_back(a.accuracy);
    confs.push_back(a.confidence.value);
  }
  if (pearson(confs, accs) >= -0.2)
    throw std::logic_error("inverted cohort construction failed the correlation check");
  const auto probe = group_into_tasks(generate(spec));
  const auto raw = pairwise_resolution(probe);
  if (!raw || *raw >= 0.5)
    throw std::logic_error("inverted cohort construction failed the pairwise check");
  return spec;
}

ScenarioSpec make_shift_scenario(double accuracy_drop, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.length = 750;
  spec.phase_split = 250;
  const double thetas[] = {0.75, 0.70, 0.65, 0.60};
  for (int i = 0; i < 4; ++i) {
    AgentProfile a;
    a.id = "m" + std::to_string(i + 1);
    a.accuracy = thetas[i];
    a.confidence = {ConfidenceLaw::Kind::Constant, thetas[i], 0, 1, 0, 0.02};
    if (accuracy_drop != 0.0)
      a.shifts.push_back(ShiftEvent{251, std::clamp(thetas[i] - accuracy_drop, 0.02, 0.98)});
    spec.agents.push_back(a);
  }
  return spec;
}

std::pair<ScenarioSpec, ScenarioSpec> make_transfer_scenarios(std::uint64_t seed) {
  const double thetas[] = {0.55, 0.65, 0.75};
  ScenarioSpec source;
  source.seed = substream_seed(seed, "transfer-source");
  source.length = 300;
  for (int i = 0; i < 3; ++i) {
    AgentProfile a;
    a.id = "m" + std::to_string(i + 1);
    a.accuracy = thetas[i];
    a.confidence = {ConfidenceLaw::Kind::Constant, thetas[i] + 0.15, 0, 1, 0, 0.02};
    source.agents.push_back(a);
  }
  ScenarioSpec target = source;
  target.seed = substream_seed(seed, "transfer-target");
  target.length = 400;
  for (auto& a : target.agents) a.accuracy -= 0.25;  // confidence stays at the source level
  return {source, target};
}

ScenarioSpec make_pool_agents(std::string_view scenario, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.length = 1000;
  const auto add = [&spec](const std::string& id, double theta, double overconf,
                           std::int64_t join_at) {
    AgentProfile a;
    a.id = id;
    a.accuracy = theta;
    a.confidence = {ConfidenceLaw::Kind::Constant, std::clamp(theta + overconf, 0.02, 0.98), 0, 1,
                    0, 0.02};
    a.join_at = join_at;
    spec.agents.push_back(a);
  };

  if (scenario == "dropout") {
    const double thetas[] = {0.35, 0.45, 0.55, 0.65, 0.75, 0.85};
    for (int i = 0; i < 6; ++i) add("m" + std::to_string(i + 1), thetas[i], 0.08, 1);
  } else if (scenario == "coldstart") {
    const double established[] = {0.45, 0.55, 0.65, 0.75};
    for (int i = 0; i < 4; ++i) add("e" + std::to_string(i + 1), established[i], 0.20, 1);
    const double newcomers[] = {0.42, 0.50, 0.58, 0.66, 0.74};
    for (int i = 0; i < 5; ++i) add("n" + std::to_string(i + 1), newcomers[i], 0.20, 501);
  } else if (scenario == "rolling") {
    const double thetas[] = {0.35, 0.45, 0.55, 0.65, 0.75, 0.85};
    for (int i = 0; i < 6; ++i) add("m" + std::to_string(i + 1), thetas[i], 0.08, 1);
  } else {
    throw std::invalid_argument("unknown pool scenario '" + std::string(scenario) + "'");
  }
  return spec;
}

ScenarioSpec make_drift_scenario(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.length = 600;
  spec.phase_split = 100;
  const double thetas[] = {0.75, 0.70};
  for (int i = 0; i < 2; ++i) {
    AgentProfile a;
    a.id = "m" + std::to_string(i + 1);
    a.accuracy = thetas[i];
    a.confidence = {ConfidenceLaw::Kind::Constant, thetas[i], 0, 1, 0, 0.02};
    a.drift = -0.0006;
    spec.agents.push_back(a);
  }
  return spec;
}

namespace {

ConfidenceLaw law_from_json(const nlohmann::json& j) {
  ConfidenceLaw law;
  const std::string kind = j.at("law").get<std::string>();
  if (kind == "constant") {
    law.kind = ConfidenceLaw::Kind::Constant;
    law.value = j.at("value").get<double>();
  } else if (kind == "uniform") {
    law.kind = ConfidenceLaw::Kind::Uniform;
    law.low = j.at("low").get<double>();
    law.high = j.at("high").get<double>();
  } else if (kind == "biased") {
    law.kind = ConfidenceLaw::Kind::Biased;
    law.bias = j.at("bias").get<double>();
  } else {
    throw std::invalid_argument("scenario: unknown confidence law '" + kind + "'");
  }
  law.jitter = j.value("jitter", 0.0);
  return law;
}

nlohmann::ordered_json law_to_json(const ConfidenceLaw& law) {
  nlohmann::ordered_json j;
  switch (law.kind) {
    case ConfidenceLaw::Kind::Constant:
      j["law"] = "constant";
      j["value"] = law.value;
      break;
    case ConfidenceLaw::Kind::Uniform:
      j["law"] = "uniform";
      j["low"] = law.low;
      j["high"] = law.high;
      break;
    case ConfidenceLaw::Kind::Biased:
      j["law"] = "biased";
      j["bias"] = law.bias;
      break;
  }
  if (law.jitter != 0.0) j["jitter"] = law.jitter;
  return j;
}

}  // namespace

ScenarioSpec scenario_from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scenario parse error: ") + e.what());
  }
  ScenarioSpec spec;
  spec.seed = j.value("seed", 0ull);
  spec.length = j.at("length").get<std::int64_t>();
  spec.shuffle_count = j.value("shuffles", static_cast<std::int64_t>(100));
  spec.replication_count = j.value("replications", static_cast<std::int64_t>(10000));
  if (j.contains("phase_split")) spec.phase_split = j.at("phase_split").get<std::int64_t>();
  for (const auto& ja : j.at("agents")) {
    AgentProfile a;
    a.id = ja.at("id").get<std::string>();
    if (ja.contains("band_accuracy"))
      a.band_accuracy = ja.at("band_accuracy").get<std::vector<double>>();
    a.accuracy = ja.value("accuracy", a.band_accuracy.empty() ? 0.5 : a.band_accuracy.front());
    a.confidence = law_from_json(ja.at("confidence"));
    a.drift = ja.value("drift", 0.0);
    a.join_at = ja.value("join_at", static_cast<std::int64_t>(1));
    if (ja.contains("leave_at")) a.leave_at = ja.at("leave_at").get<std::int64_t>();
    if (ja.contains("shifts"))
      for (const auto& js : ja.at("shifts"))
        a.shifts.push_back(ShiftEvent{js.at("at").get<std::int64_t>(),
                                      js.at("accuracy").get<double>()});
    spec.agents.push_back(std::move(a));
  }
  spec.validate();
  return spec;
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json_text(ss.str());
}

std::string scenario_to_json_text(const ScenarioSpec& spec) {
  nlohmann::ordered_json j;
  j["seed"] = spec.seed;
  j["length"] = spec.length;
  j["shuffles"] = spec.shuffle_count;
  j["replications"] = spec.replication_count;
  if (spec.phase_split) j["phase_split"] = *spec.phase_split;
  j["agents"] = nlohmann::ordered_json::array();
  for (const auto& a : spec.agents) {
    nlohmann::ordered_json ja;
    ja["id"] = a.id;
    ja["accuracy"] = a.accuracy;
    if (!a.band_accuracy.empty()) ja["band_accuracy"] = a.band_accuracy;
    ja["confidence"] = law_to_json(a.confidence);
    if (a.drift != 0.0) ja["drift"] = a.drift;
    if (a.join_at != 1) ja["join_at"] = a.join_at;
    if (a.leave_at) ja["leave_at"] = *a.leave_at;
    if (!a.shifts.empty()) {
      ja["shifts"] = nlohmann::ordered_json::array();
      for (const auto& s : a.shifts)
        ja["shifts"].push_back({{"at", s.at_obs}, {"accuracy", s.accuracy}});
    }
    j["agents"].push_back(std::move(ja));
  }
  return j.dump(2) + "\n";
}

}  // namespace margin
