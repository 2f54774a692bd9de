#include "margin/selection.hpp"

#include <algorithm>
#include <stdexcept>

namespace margin {

SelectionResult select_answer(const TaskResponses& task,
                              const std::map<std::string, double>& calibrated) {
  validate_task(task);
  SelectionResult result;
  std::map<std::string, double> scores;
  std::map<std::string, std::int64_t> counts;
  std::map<std::string, int> class_correct;
  std::int64_t n_correct = 0;
  for (const auto& r : task.responses) {
    const auto it = calibrated.find(r.agent);
    if (it == calibrated.end())
      throw std::invalid_argument("task '" + task.task_id + "': no calibrated confidence for agent '" +
                                  r.agent + "'");
    result.calibrated[r.agent] = it->second;
    scores[r.answer_class] += it->second;
    counts[r.answer_class] += 1;
    class_correct[r.answer_class] = r.correct;
    if (r.correct == 1) {
      result.oracle_correct = 1;
      ++n_correct;
    }
  }
  result.random_expected =
      static_cast<double>(n_correct) / static_cast<double>(task.responses.size());

  // Maps iterate in id order, so keeping strict '>' breaks ties toward the
  // lexicographically smallest answer class.
  const auto argmax = [](const auto& m) {
    auto best = m.begin();
    for (auto it = std::next(m.begin()); it != m.end(); ++it)
      if (it->second > best->second) best = it;
    return best->first;
  };
  result.chosen_answer_class = argmax(scores);
  result.chosen_correct = class_correct.at(result.chosen_answer_class);
  result.majority_correct = class_correct.at(argmax(counts));
  return result;
}

EceResult expected_calibration_error(std::span<const Prediction> predictions, int bin_count) {
  if (predictions.empty())
    throw std::invalid_argument("expected_calibration_error: empty prediction list");
  if (bin_count < 1) throw std::invalid_argument("bin_count must be >= 1");

  struct Acc {
    std::int64_t n = 0;
    double conf = 0.0, acc = 0.0;
  };
  std::vector<Acc> acc(static_cast<std::size_t>(bin_count));
  for (const auto& p : predictions) {
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0))
      throw std::invalid_argument("confidence out of range [0,1]");
    int idx = static_cast<int>(p.confidence * bin_count);
    if (idx >= bin_count) idx = bin_count - 1;  // top bin closed
    auto& a = acc[static_cast<std::size_t>(idx)];
    a.n += 1;
    a.conf += p.confidence;
    a.acc += static_cast<double>(p.correct);
  }

  EceResult out;
  out.bins.bin_count = bin_count;
  const auto total = static_cast<double>(predictions.size());
  for (int b = 0; b < bin_count; ++b) {
    const auto& a = acc[static_cast<std::size_t>(b)];
    ReliabilityBin bin;
    bin.bin_low = static_cast<double>(b) / bin_count;
    bin.bin_high = static_cast<double>(b + 1) / bin_count;
    bin.count = a.n;
    if (a.n > 0) {
      bin.mean_confidence = a.conf / static_cast<double>(a.n);
      bin.mean_accuracy = a.acc / static_cast<double>(a.n);
      out.value += (static_cast<double>(a.n) / total) *
                   std::abs(bin.mean_accuracy - bin.mean_confidence);
    }
    out.bins.bins.push_back(bin);
  }
  return out;
}

namespace {

// Shared pair loop; conf(task_index, response) supplies the confidence channel.
template <typename ConfFn>
std::optional<double> pairwise_impl(std::span<const TaskResponses> tasks, ConfFn conf) {
  double score = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const auto& rs = tasks[t].responses;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        if (rs[i].answer_class == rs[j].answer_class) continue;
        if (rs[i].correct + rs[j].correct != 1) continue;
        const double ci = conf(t, rs[i]);
        const double cj = conf(t, rs[j]);
        const double c_right = rs[i].correct == 1 ? ci : cj;
        const double c_wrong = rs[i].correct == 1 ? cj : ci;
        if (c_right > c_wrong)
          score += 1.0;
        else if (c_right == c_wrong)
          score += 0.5;
        ++pairs;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return score / static_cast<double>(pairs);
}

}  // namespace

std::optional<double> pairwise_resolution(std::span<const TaskResponses> tasks) {
  return pairwise_impl(tasks, [](std::size_t, const Response& r) { return r.confidence; });
}

std::optional<double> pairwise_resolution(
    std::span<const TaskResponses> tasks,
    std::span<const std::map<std::string, double>> per_task_confidence) {
  if (per_task_confidence.size() != tasks.size())
    throw std::invalid_argument("pairwise_resolution: confidence list length mismatch");
  return pairwise_impl(tasks, [&](std::size_t t, const Response& r) {
    return per_task_confidence[t].at(r.agent);
  });
}

SuiteSummary selection_suite(std::span<const TaskResponses> tasks, const CalibratorConfig& config,
                             SuiteMode mode) {
  config.validate();
  SuiteSummary summary;
  summary.mode = mode;
  summary.task_count = static_cast<std::int64_t>(tasks.size());

  Pool pool(config);
  std::vector<std::map<std::string, double>> recorded;
  recorded.reserve(tasks.size());

  const std::vector<std::int64_t> marks = {10, 30, 50, 100, 150};
  std::int64_t chosen_sum = 0, oracle_sum = 0, majority_sum = 0;
  double random_sum = 0.0;
  std::int64_t seen = 0;
  for (const auto& task : tasks) {
    std::map<std::string, double> conf;
    for (const auto& r : task.responses)
      conf[r.agent] = mode == SuiteMode::Margin ? pool.calibrate(r.agent, r.confidence)
                                                : r.confidence;
    const SelectionResult sel = select_answer(task, conf);
    recorded.push_back(std::move(conf));
    chosen_sum += sel.chosen_correct;
    oracle_sum += sel.oracle_correct;
    majority_sum += sel.majority_correct;
    random_sum += sel.random_expected;
    ++seen;
    if (mode == SuiteMode::Margin)
      for (const auto& r : task.responses) pool.observe(r.agent, r.confidence, r.correct);
    if (std::find(marks.begin(), marks.end(), seen) != marks.end() &&
        seen < static_cast<std::int64_t>(tasks.size()))
      summary.convergence.emplace_back(seen,
                                       static_cast<double>(chosen_sum) / static_cast<double>(seen));
  }
  if (seen == 0) throw std::invalid_argument("selection_suite: empty task stream");
  const auto n = static_cast<double>(seen);
  summary.pass1 = static_cast<double>(chosen_sum) / n;
  summary.oracle = static_cast<double>(oracle_sum) / n;
  summary.majority = static_cast<double>(majority_sum) / n;
  summary.random_expected = random_sum / n;
  summary.convergence.emplace_back(seen, summary.pass1);
  summary.pairwise = pairwise_resolution(tasks, recorded);
  return summary;
}

}  // namespace margin
