#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "doctest.h"
#include "margin/selection.hpp"
#include "margin/stats.hpp"
#include "margin/synthetic.hpp"

using namespace margin;

namespace {

ScenarioSpec two_agent_spec(std::uint64_t seed, std::int64_t length) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.length = length;
  AgentProfile a;
  a.id = "a";
  a.accuracy = 0.7;
  a.confidence = {ConfidenceLaw::Kind::Constant, 0.8, 0, 1, 0, 0.02};
  AgentProfile b;
  b.id = "b";
  b.accuracy = 0.4;
  b.confidence = {ConfidenceLaw::Kind::Uniform, 0, 0.3, 0.6, 0, 0};
  spec.agents = {a, b};
  return spec;
}

}  // namespace

TEST_CASE("degenerate accuracy one gives all successes") {
  ScenarioSpec spec;
  spec.seed = 9;
  spec.length = 200;
  AgentProfile a;
  a.id = "sure";
  a.accuracy = 1.0;
  a.confidence = {ConfidenceLaw::Kind::Constant, 0.9, 0, 1, 0, 0};
  spec.agents = {a};
  for (const auto& obs : generate(spec)) CHECK(obs.correct == 1);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto spec = two_agent_spec(77, 300);
  const auto first = generate(spec);
  const auto second = generate(spec);
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].agent == second[i].agent);
    CHECK(first[i].confidence == second[i].confidence);
    CHECK(first[i].correct == second[i].correct);
  }
}

TEST_CASE("long-run outcome mean approaches the configured accuracy") {
  ScenarioSpec spec;
  spec.seed = 13;
  spec.length = 10000;
  AgentProfile a;
  a.id = "coin";
  a.accuracy = 0.5;
  a.confidence = {ConfidenceLaw::Kind::Constant, 0.5, 0, 1, 0, 0};
  spec.agents = {a};
  double sum = 0.0;
  for (const auto& obs : generate(spec)) sum += obs.correct;
  const double m = sum / static_cast<double>(spec.length);
  CHECK(m > 0.48);
  CHECK(m < 0.52);
}

TEST_CASE("removing an agent leaves the other streams bit-identical") {
  auto spec = two_agent_spec(123, 400);
  const auto full = generate(spec);
  spec.agents.erase(spec.agents.begin());  // drop agent "a"
  const auto reduced = generate(spec);

  std::vector<Observation> b_full;
  for (const auto& o : full)
    if (o.agent == "b") b_full.push_back(o);
  REQUIRE(b_full.size() == reduced.size());
  for (std::size_t i = 0; i < reduced.size(); ++i) {
    CHECK(b_full[i].confidence == reduced[i].confidence);
    CHECK(b_full[i].correct == reduced[i].correct);
    CHECK(b_full[i].task == reduced[i].task);
  }
}

TEST_CASE("shift events and drift move the sampled accuracy") {
  ScenarioSpec spec;
  spec.seed = 31;
  spec.length = 4000;
  AgentProfile a;
  a.id = "shifty";
  a.accuracy = 0.9;
  a.confidence = {ConfidenceLaw::Kind::Constant, 0.9, 0, 1, 0, 0};
  a.shifts = {ShiftEvent{2001, 0.2}};
  spec.agents = {a};
  const auto stream = generate(spec);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < stream.size(); ++i)
    (i < 2000 ? before : after) += stream[i].correct;
  CHECK(before / 2000.0 > 0.85);
  CHECK(after / 2000.0 < 0.25);

  // Drift clamps at the declared floor.
  AgentProfile d;
  d.id = "drifter";
  d.accuracy = 0.2;
  d.confidence = {ConfidenceLaw::Kind::Constant, 0.5, 0, 1, 0, 0};
  d.drift = -0.01;
  ScenarioSpec drift_spec;
  drift_spec.seed = 32;
  drift_spec.length = 500;
  drift_spec.agents = {d};
  double tail = 0.0;
  const auto drifted = generate(drift_spec);
  for (std::size_t i = 400; i < drifted.size(); ++i) tail += drifted[i].correct;
  CHECK(tail / 100.0 < 0.12);  // floor is 0.02
}

TEST_CASE("phase split tags tasks and join/leave windows bound participation") {
  auto spec = two_agent_spec(55, 100);
  spec.phase_split = 40;
  spec.agents[1].join_at = 20;
  spec.agents[1].leave_at = 60;
  const auto stream = generate(spec);
  std::int64_t b_count = 0;
  for (const auto& o : stream) {
    REQUIRE(o.phase.has_value());
    const std::int64_t t = std::stoll(o.task.substr(1));
    CHECK(*o.phase == (t <= 40 ? "p1" : "p2"));
    if (o.agent == "b") {
      ++b_count;
      CHECK(t >= 20);
      CHECK(t < 60);
    }
  }
  CHECK(b_count == 40);
}

TEST_CASE("scenario specs round-trip through json") {
  auto spec = two_agent_spec(88, 250);
  spec.phase_split = 100;
  spec.agents[0].shifts = {ShiftEvent{101, 0.3}};
  spec.agents[1].join_at = 5;
  const std::string text = scenario_to_json_text(spec);
  const ScenarioSpec back = scenario_from_json_text(text);
  CHECK(back.seed == spec.seed);
  CHECK(back.length == spec.length);
  CHECK(back.phase_split == spec.phase_split);
  REQUIRE(back.agents.size() == 2);
  CHECK(back.agents[0].shifts.size() == 1);
  CHECK(back.agents[1].join_at == 5);
  // Same stream from the round-tripped spec.
  const auto s1 = generate(spec);
  const auto s2 = generate(back);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].confidence == s2[i].confidence);

  CHECK_THROWS_AS(scenario_from_json_text("{"), std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json_text("{\"length\": 10, \"agents\": []}"),
                  std::invalid_argument);
}

TEST_CASE("inverted cohort: anti-correlated confidence, raw pairwise below 0.5") {
  const ScenarioSpec spec = make_inverted_cohort(6);
  std::vector<double> accs, confs;
  for (const auto& a : spec.agents) {
    accs.push_back(a.accuracy);
    confs.push_back(a.confidence.value);
  }
  CHECK(pearson(confs, accs) < -0.2);

  const auto stream = generate(spec);
  const auto tasks = group_into_tasks(stream);

  // Exhaustive pair enumeration, written out independently of the library loop.
  double score = 0.0;
  std::int64_t pairs = 0;
  for (const auto& task : tasks) {
    for (std::size_t i = 0; i < task.responses.size(); ++i) {
      for (std::size_t j = i + 1; j < task.responses.size(); ++j) {
        const auto& a = task.responses[i];
        const auto& b = task.responses[j];
        if (a.answer_class == b.answer_class || a.correct + b.correct != 1) continue;
        const auto& winner = a.confidence > b.confidence ? a : b;
        if (a.confidence == b.confidence)
          score += 0.5;
        else
          score += winner.correct;
        ++pairs;
      }
    }
  }
  REQUIRE(pairs > 0);
  const double oracle_value = score / static_cast<double>(pairs);
  const auto lib_value = pairwise_resolution(tasks);
  REQUIRE(lib_value.has_value());
  CHECK(*lib_value == doctest::Approx(oracle_value));
  CHECK(*lib_value < 0.5);

  // Empirical agent-level correlation mirrors the profile-level one.
  std::map<std::string, std::pair<double, double>> sums;  // conf, correct
  std::map<std::string, std::int64_t> counts;
  for (const auto& o : stream) {
    sums[o.agent].first += o.confidence;
    sums[o.agent].second += o.correct;
    counts[o.agent] += 1;
  }
  std::vector<double> mean_conf, mean_acc;
  for (const auto& [id, s] : sums) {
    mean_conf.push_back(s.first / counts[id]);
    mean_acc.push_back(s.second / counts[id]);
  }
  CHECK(pearson(mean_conf, mean_acc) < -0.2);

  // The near-certain zero-accuracy anchor loses every qualifying pair it is
  // the wrong side of.
  for (const auto& task : tasks) {
    for (const auto& r : task.responses) {
      if (r.agent != "a00" || r.correct == 1) continue;
      for (const auto& other : task.responses)
        if (other.correct == 1 && other.answer_class != r.answer_class)
          CHECK(r.confidence > other.confidence);  // so the pair scores 0
    }
  }
}

TEST_CASE("builders produce valid scenarios") {
  CHECK_NOTHROW(make_shift_scenario(0.4, 1).validate());
  CHECK_NOTHROW(make_shift_scenario(0.0, 1).validate());
  const auto [source, target] = make_transfer_scenarios(2);
  CHECK_NOTHROW(source.validate());
  CHECK_NOTHROW(target.validate());
  for (const char* name : {"dropout", "coldstart", "rolling"})
    CHECK_NOTHROW(make_pool_agents(name, 3).validate());
  CHECK_THROWS_AS(make_pool_agents("bogus", 3), std::invalid_argument);
  CHECK_NOTHROW(make_drift_scenario(4).validate());
}
