#include "margin/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace margin {
namespace {

using Json = nlohmann::ordered_json;

std::string csv_num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", x);
  return buf;
}

Json summary_json(const MetricSummary& s) {
  return Json{{"mean", s.mean}, {"std", s.stdev}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high}};
}

Json deltas_json(const std::vector<PairedDelta>& deltas) {
  Json arr = Json::array();
  for (const auto& d : deltas)
    arr.push_back(Json{{"method_a", d.method_a},
                       {"method_b", d.method_b},
                       {"delta_mean", d.delta_mean},
                       {"ci_low", d.ci_low},
                       {"ci_high", d.ci_high}});
  return arr;
}

}  // namespace

std::string to_json_text(const ExperimentReport& report) {
  Json j;
  j["seed"] = report.seed;
  j["shuffles"] = report.shuffles;
  j["bins"] = report.bins;
  j["methods"] = report.methods;
  Json metrics;
  for (const auto& m : report.methods) metrics[m] = summary_json(report.summary.at(m));
  j["ece"] = metrics;
  j["deltas"] = deltas_json(report.deltas);
  if (report.freeze_verified) j["freeze_verified"] = true;
  return j.dump(2) + "\n";
}

std::string to_json_text(const DynamicPoolReport& report) {
  Json j;
  j["scenario"] = pool_scenario_name(report.scenario);
  j["seed"] = report.seed;
  j["shuffles"] = report.shuffles;
  j["length"] = report.length;
  j["window"] = report.window;
  switch (report.scenario) {
    case PoolScenario::Dropout:
      j["pre_mean"] = report.pre_mean;
      j["post_mean"] = report.post_mean;
      j["pooled_std"] = report.pooled_std;
      j["pass"] = report.dropout_pass;
      break;
    case PoolScenario::ColdStart: {
      j["checkpoints"] = report.checkpoints;
      j["shrink_ece"] = report.shrink_ece;
      j["no_shrink_ece"] = report.no_shrink_ece;
      j["established_reference"] = report.established_reference;
      j["pass"] = report.coldstart_pass;
      break;
    }
    case PoolScenario::Rolling: {
      Json segs = Json::array();
      for (std::size_t i = 0; i < report.segments.size(); ++i)
        segs.push_back(Json{{"from", report.segments[i].first},
                            {"to", report.segments[i].second},
                            {"ece", report.segment_mean[i]}});
      j["segments"] = segs;
      j["slope_mean"] = report.slope_mean;
      j["slope_ci_low"] = report.slope_ci_low;
      j["slope_ci_high"] = report.slope_ci_high;
      j["pass"] = report.rolling_pass;
      break;
    }
  }
  return j.dump(2) + "\n";
}

std::string to_json_text(const AblationReport& report) {
  Json j;
  j["seed"] = report.seed;
  j["cells"] = Json::array();
  for (const auto& cell : report.cells) {
    Json jc;
    jc["label"] = cell.label;
    for (const auto& [method, summary] : cell.methods) jc[method] = summary_json(summary);
    j["cells"].push_back(std::move(jc));
  }
  return j.dump(2) + "\n";
}

std::string to_json_text(const VerifyBundle& bundle) {
  Json j;
  j["all_pass"] = bundle.all_pass;
  for (int prop : bundle.props) {
    switch (prop) {
      case 1: {
        const auto& r = bundle.closed_form;
        j["prop1"] = Json{{"pairs", r.pair_count},
                          {"steps", r.steps},
                          {"seed", r.seed},
                          {"max_abs_difference", r.max_abs_difference},
                          {"tolerance", r.tolerance},
                          {"weight_sum_exact", r.weight_sum_exact},
                          {"pass", r.pass}};
        break;
      }
      case 2: {
        const auto& r = bundle.convergence;
        j["prop2"] = Json{{"alpha", r.alpha},
                          {"theta", r.theta},
                          {"initial_estimate", r.initial_estimate},
                          {"horizon", r.horizon},
                          {"replications", r.replications},
                          {"seed", r.seed},
                          {"empirical_mean", r.empirical_mean},
                          {"predicted_mean", r.predicted_mean},
                          {"empirical_std", r.empirical_std},
                          {"predicted_std", r.predicted_std},
                          {"mean_tolerance", r.mean_tolerance},
                          {"pass", r.pass}};
        break;
      }
      case 3: {
        const auto& r = bundle.tracking;
        j["prop3"] = Json{{"alpha", r.alpha},
                          {"theta_before", r.theta_before},
                          {"theta_after", r.theta_after},
                          {"tolerance", r.tolerance},
                          {"replications", r.replications},
                          {"seed", r.seed},
                          {"predicted_recovery", r.predicted_recovery},
                          {"empirical_recovery", r.empirical_recovery},
                          {"pass", r.pass}};
        break;
      }
      case 4: {
        const auto& r = bundle.ushape;
        Json pts = Json::array();
        for (const auto& p : r.points)
          pts.push_back(
              Json{{"alpha", p.alpha}, {"empirical_error", p.empirical_error}, {"bound", p.bound}});
        j["prop4"] = Json{{"drift", r.drift},
                          {"theta0", r.theta0},
                          {"replications", r.replications},
                          {"seed", r.seed},
                          {"points", pts},
                          {"argmin_alpha", r.points[r.argmin].alpha},
                          {"interior_minimum", r.interior_minimum},
                          {"bound_pass", r.bound_pass},
                          {"pass", r.pass}};
        break;
      }
      case 5: {
        const auto& r = bundle.asymmetric;
        j["prop5"] = Json{{"alpha_up", r.alpha_up},
                          {"alpha_down", r.alpha_down},
                          {"theta", r.theta},
                          {"replications", r.replications},
                          {"seed", r.seed},
                          {"empirical_fixed_point", r.empirical_fixed_point},
                          {"predicted_fixed_point", r.predicted_fixed_point},
                          {"predicted_bias", r.predicted_bias},
                          {"tolerance", r.tolerance},
                          {"pass", r.pass}};
        break;
      }
      case 6: {
        const auto& r = bundle.selection;
        Json pts = Json::array();
        for (const auto& p : r.points)
          pts.push_back(
              Json{{"sigma", p.sigma}, {"empirical", p.empirical}, {"predicted", p.predicted}});
        j["prop6"] = Json{{"accuracies", r.accuracies},
                          {"replications", r.replications},
                          {"seed", r.seed},
                          {"points", pts},
                          {"uniform_limit_sigma", r.uniform_limit_sigma},
                          {"uniform_limit_empirical", r.uniform_limit_empirical},
                          {"monotone_pass", r.monotone_pass},
                          {"endpoint_pass", r.endpoint_pass},
                          {"closed_form_pass", r.closed_form_pass},
                          {"pass", r.pass}};
        break;
      }
      default:
        throw std::invalid_argument("unknown prop " + std::to_string(prop));
    }
  }
  return j.dump(2) + "\n";
}

std::string reliability_csv(const ReliabilityBins& bins) {
  std::string out = "bin_low,bin_high,count,mean_conf,mean_acc\n";
  for (const auto& b : bins.bins) {
    out += csv_num(b.bin_low) + "," + csv_num(b.bin_high) + "," + std::to_string(b.count) + ",";
    if (b.count > 0)
      out += csv_num(b.mean_confidence) + "," + csv_num(b.mean_accuracy);
    else
      out += "nan,nan";
    out += "\n";
  }
  return out;
}

std::string per_shuffle_csv(const ExperimentReport& report) {
  std::string out = "shuffle";
  for (const auto& m : report.methods) out += "," + m;
  out += "\n";
  for (std::int64_t s = 0; s < report.shuffles; ++s) {
    out += std::to_string(s);
    for (const auto& m : report.methods)
      out += "," + csv_num(report.per_shuffle.at(m)[static_cast<std::size_t>(s)]);
    out += "\n";
  }
  return out;
}

std::string series_csv(const DynamicPoolReport& report) {
  std::string out = "step,ece_mean,ece_std\n";
  for (std::size_t i = 0; i < report.series_steps.size(); ++i)
    out += std::to_string(report.series_steps[i]) + "," + csv_num(report.series_mean[i]) + "," +
           csv_num(report.series_std[i]) + "\n";
  return out;
}

std::string to_json_text(const SuiteAggregate& aggregate) {
  Json j;
  j["seed"] = aggregate.seed;
  j["shuffles"] = aggregate.shuffles;
  Json p1, pw;
  for (const auto& [m, s] : aggregate.pass1) p1[m] = summary_json(s);
  for (const auto& [m, s] : aggregate.pairwise) pw[m] = summary_json(s);
  j["pass1"] = p1;
  j["pairwise_resolution"] = pw;
  j["deltas"] = deltas_json(aggregate.deltas);
  if (aggregate.undefined_pairwise > 0) j["undefined_pairwise_shuffles"] = aggregate.undefined_pairwise;
  return j.dump(2) + "\n";
}

std::string convergence_csv(const SuiteAggregate& aggregate) {
  std::string out = "tasks_seen";
  for (const auto& [m, _] : aggregate.convergence_mean) out += "," + m;
  out += "\n";
  for (std::size_t i = 0; i < aggregate.checkpoints.size(); ++i) {
    out += std::to_string(aggregate.checkpoints[i]);
    for (const auto& [_, vals] : aggregate.convergence_mean) out += "," + csv_num(vals[i]);
    out += "\n";
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace margin
