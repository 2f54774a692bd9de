#include "margin/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "margin/rng.hpp"
#include "margin/stats.hpp"
#include "margin/synthetic.hpp"

namespace margin {
namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

double ewma_step(double value, double alpha, double x) {
  return (1.0 - alpha) * value + alpha * x;
}

}  // namespace

ClosedFormReport verify_closed_form(int pair_count, std::int64_t steps, std::uint64_t seed) {
  ClosedFormReport report;
  report.pair_count = pair_count;
  report.steps = steps;
  report.seed = seed;

  Rng param_rng(substream_seed(seed, "closed-form-params"));
  double worst = 0.0;
  for (int p = 0; p < pair_count; ++p) {
    const double alpha = param_rng.uniform(0.01, 0.6);
    const double theta = param_rng.uniform(0.2, 0.8);
    const double a0 = param_rng.uniform(0.0, 1.0);
    Rng rng(substream_seed(seed, "closed-form-stream", static_cast<std::uint64_t>(p)));

    std::vector<int> xs(static_cast<std::size_t>(steps));
    for (auto& x : xs) x = rng.bernoulli(theta);

    double iterated = a0;
    for (int x : xs) iterated = ewma_step(iterated, alpha, static_cast<double>(x));

    // Expansion: (1-a)^t a0 + a * sum_tau (1-a)^(t-tau) x_tau, powers computed
    // independently of the recurrence.
    double expansion = std::pow(1.0 - alpha, static_cast<double>(steps)) * a0;
    for (std::int64_t tau = 1; tau <= steps; ++tau)
      expansion += alpha * std::pow(1.0 - alpha, static_cast<double>(steps - tau)) *
                   static_cast<double>(xs[static_cast<std::size_t>(tau - 1)]);

    worst = std::max(worst, std::abs(iterated - expansion));
  }
  report.max_abs_difference = worst;

  // Weight-sum identity in its operational form: because the per-step weights
  // sum to one, a constant input is a fixed point, and that holds bit-exactly
  // in IEEE double for any alpha in (0,1).
  bool exact = true;
  for (double alpha : {0.005, 0.04, 0.16, 0.32, 0.5, 0.77, 0.99}) {
    double at_one = 1.0, at_zero = 0.0;
    for (int t = 0; t < 200; ++t) {
      at_one = ewma_step(at_one, alpha, 1.0);
      at_zero = ewma_step(at_zero, alpha, 0.0);
    }
    exact = exact && at_one == 1.0 && at_zero == 0.0;
  }
  report.weight_sum_exact = exact;
  report.pass = report.max_abs_difference <= report.tolerance && exact;
  return report;
}

ConvergenceReport verify_convergence(double alpha, double theta, double initial_estimate,
                                     std::int64_t horizon, std::int64_t replications,
                                     std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  ConvergenceReport report;
  report.alpha = alpha;
  report.theta = theta;
  report.initial_estimate = initial_estimate;
  report.horizon = horizon;
  report.replications = replications;
  report.seed = seed;

  const auto predicted_mean = [&](std::int64_t t) {
    return theta + std::pow(1.0 - alpha, static_cast<double>(t)) * (initial_estimate - theta);
  };
  const auto predicted_var = [&](std::int64_t t) {
    return alpha / (2.0 - alpha) * theta * (1.0 - theta) *
           (1.0 - std::pow(1.0 - alpha, 2.0 * static_cast<double>(t)));
  };

  std::vector<std::int64_t> marks = {0, 10, 25, 50, 100, 200, 500, 1000, 2000};
  marks.erase(std::remove_if(marks.begin(), marks.end(),
                             [&](std::int64_t t) { return t > horizon; }),
              marks.end());
  if (marks.empty() || marks.back() != horizon) marks.push_back(horizon);

  std::vector<double> sum(marks.size(), 0.0), sumsq(marks.size(), 0.0);
  for (std::int64_t r = 0; r < replications; ++r) {
    Rng rng(substream_seed(seed, "convergence", static_cast<std::uint64_t>(r)));
    double a = initial_estimate;
    std::size_t mi = 0;
    for (std::int64_t t = 0; t <= horizon; ++t) {
      if (mi < marks.size() && marks[mi] == t) {
        sum[mi] += a;
        sumsq[mi] += a * a;
        ++mi;
      }
      if (t < horizon) a = ewma_step(a, alpha, static_cast<double>(rng.bernoulli(theta)));
    }
  }

  const auto n = static_cast<double>(replications);
  for (std::size_t i = 0; i < marks.size(); ++i) {
    ConvergencePoint pt;
    pt.t = marks[i];
    pt.empirical_mean = sum[i] / n;
    pt.empirical_var = std::max(0.0, (sumsq[i] - sum[i] * sum[i] / n) / (n - 1.0));
    pt.predicted_mean = predicted_mean(marks[i]);
    pt.predicted_var = predicted_var(marks[i]);
    report.series.push_back(pt);
  }

  const ConvergencePoint& last = report.series.back();
  report.empirical_mean = last.empirical_mean;
  report.predicted_mean = last.predicted_mean;
  report.empirical_variance = last.empirical_var;
  report.predicted_variance = last.predicted_var;
  report.empirical_std = std::sqrt(last.empirical_var);
  report.predicted_std = std::sqrt(last.predicted_var);

  const double se = report.empirical_std / std::sqrt(n);
  report.mean_tolerance = 4.0 * se;
  report.mean_pass = std::abs(report.empirical_mean - report.predicted_mean) <= report.mean_tolerance;
  report.variance_pass =
      report.predicted_variance == 0.0
          ? report.empirical_variance == 0.0
          : std::abs(report.empirical_variance - report.predicted_variance) <=
                report.variance_rel_tolerance * report.predicted_variance;
  report.pass = report.mean_pass && report.variance_pass;
  return report;
}

TrackingReport verify_tracking(double alpha, double theta_before, double delta, double tolerance,
                               std::int64_t replications, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
  TrackingReport report;
  report.alpha = alpha;
  report.theta_before = theta_before;
  report.theta_after = theta_before + delta;
  report.tolerance = tolerance;
  report.replications = replications;
  report.seed = seed;

  if (std::abs(delta) <= tolerance) {
    report.predicted_recovery = 0.0;
    report.empirical_recovery = 0;
    report.pass = true;
    return report;
  }
  report.predicted_recovery = std::log(std::abs(delta) / tolerance) / alpha;

  const auto max_steps =
      static_cast<std::int64_t>(std::ceil(report.predicted_recovery * 4.0)) + 50;
  // Pre-shift convergence assumed: every replication starts at theta_before.
  std::vector<double> estimates(static_cast<std::size_t>(replications), theta_before);
  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(replications));
  for (std::int64_t r = 0; r < replications; ++r)
    rngs.emplace_back(substream_seed(seed, "tracking", static_cast<std::uint64_t>(r)));

  const double theta_after = report.theta_after;
  for (std::int64_t n = 1; n <= max_steps; ++n) {
    double sum = 0.0;
    for (std::size_t r = 0; r < estimates.size(); ++r) {
      estimates[r] = ewma_step(estimates[r], alpha,
                               static_cast<double>(rngs[r].bernoulli(theta_after)));
      sum += estimates[r];
    }
    const double bias = std::abs(sum / static_cast<double>(replications) - theta_after);
    report.bias_curve.push_back(bias);
    if (report.empirical_recovery < 0 && bias <= tolerance) {
      report.empirical_recovery = n;
      break;
    }
  }
  report.pass = report.empirical_recovery > 0 &&
                std::abs(static_cast<double>(report.empirical_recovery) -
                         report.predicted_recovery) <=
                    report.rel_tolerance * report.predicted_recovery;
  return report;
}

UshapeReport verify_ushape(std::vector<double> alphas, double drift, double theta0,
                           std::int64_t burn_in, std::int64_t window, std::int64_t replications,
                           std::uint64_t seed) {
  if (alphas.size() < 3) throw std::invalid_argument("ushape needs at least 3 learning rates");
  if (!(drift > 0.0)) throw std::invalid_argument("drift must be > 0");
  UshapeReport report;
  report.drift = drift;
  report.theta0 = theta0;
  report.burn_in = burn_in;
  report.window = window;
  report.replications = replications;
  report.seed = seed;

  const std::int64_t horizon = burn_in + window;
  std::vector<double> theta(static_cast<std::size_t>(horizon + 1));
  for (std::int64_t t = 1; t <= horizon; ++t)
    theta[static_cast<std::size_t>(t)] =
        std::clamp(theta0 + drift * static_cast<double>(t - 1), kAccuracyFloor, kAccuracyCeil);

  double theta_bar = 0.0;
  for (std::int64_t t = burn_in + 1; t <= horizon; ++t)
    theta_bar += theta[static_cast<std::size_t>(t)];
  theta_bar /= static_cast<double>(window);

  for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
    const double alpha = alphas[ai];
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
    double err_sum = 0.0;
    for (std::int64_t r = 0; r < replications; ++r) {
      Rng rng(substream_seed(seed, "ushape", static_cast<std::uint64_t>(ai) * 1000003ULL +
                                              static_cast<std::uint64_t>(r)));
      double a = theta0;
      double acc = 0.0;
      for (std::int64_t t = 1; t <= horizon; ++t) {
        const double th = theta[static_cast<std::size_t>(t)];
        a = ewma_step(a, alpha, static_cast<double>(rng.bernoulli(th)));
        if (t > burn_in) acc += std::abs(a - th);
      }
      err_sum += acc / static_cast<double>(window);
    }
    UshapePoint pt;
    pt.alpha = alpha;
    pt.empirical_error = err_sum / static_cast<double>(replications);
    pt.bound = drift / (2.0 * alpha) +
               std::sqrt(alpha * theta_bar * (1.0 - theta_bar) / (2.0 - alpha));
    report.points.push_back(pt);
  }

  report.bound_pass = std::all_of(report.points.begin(), report.points.end(),
                                  [](const UshapePoint& p) {
                                    return p.empirical_error <= p.bound;
                                  });
  report.argmin = 0;
  for (std::size_t i = 1; i < report.points.size(); ++i)
    if (report.points[i].empirical_error < report.points[report.argmin].empirical_error)
      report.argmin = i;
  report.interior_minimum = report.argmin > 0 && report.argmin + 1 < report.points.size();
  report.pass = report.bound_pass && report.interior_minimum;
  return report;
}

AsymmetricReport verify_asymmetric(double alpha_up, double alpha_down, double theta,
                                   std::int64_t horizon, std::int64_t replications,
                                   std::uint64_t seed) {
  if (!(alpha_up > 0.0 && alpha_up < 1.0) || !(alpha_down > 0.0 && alpha_down < 1.0))
    throw std::invalid_argument("learning rates must be in (0,1)");
  AsymmetricReport report;
  report.alpha_up = alpha_up;
  report.alpha_down = alpha_down;
  report.theta = theta;
  report.horizon = horizon;
  report.replications = replications;
  report.seed = seed;

  const double denom = alpha_up * theta + alpha_down * (1.0 - theta);
  report.predicted_fixed_point = alpha_up * theta / denom;
  report.predicted_bias = theta * (1.0 - theta) * std::abs(alpha_up - alpha_down) / denom;

  double sum = 0.0;
  for (std::int64_t r = 0; r < replications; ++r) {
    Rng rng(substream_seed(seed, "asymmetric", static_cast<std::uint64_t>(r)));
    double a = theta;
    for (std::int64_t t = 0; t < horizon; ++t) {
      const int x = rng.bernoulli(theta);
      a = x == 1 ? ewma_step(a, alpha_up, 1.0) : ewma_step(a, alpha_down, 0.0);
    }
    sum += a;
  }
  report.empirical_fixed_point = sum / static_cast<double>(replications);
  report.pass = std::abs(report.empirical_fixed_point - report.predicted_fixed_point) <=
                report.tolerance;
  return report;
}

double selection_probability_oracle(std::span<const double> accuracies, double sigma) {
  if (accuracies.size() < 2) throw std::invalid_argument("need at least 2 agents");
  if (sigma == 0.0) return 1.0;
  // P(best wins) = E_u[prod_j Phi((p1 - p_j)/sigma + u)] over u ~ N(0,1);
  // Simpson quadrature over [-8, 8].
  constexpr int kNodes = 4001;
  constexpr double kLo = -8.0, kHi = 8.0;
  const double h = (kHi - kLo) / (kNodes - 1);
  double integral = 0.0;
  for (int i = 0; i < kNodes; ++i) {
    const double u = kLo + h * i;
    double f = std::exp(-0.5 * u * u) / 2.5066282746310002;  // standard normal pdf
    for (std::size_t j = 1; j < accuracies.size(); ++j)
      f *= normal_cdf((accuracies[0] - accuracies[j]) / sigma + u);
    const double w = (i == 0 || i == kNodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    integral += w * f;
  }
  return integral * h / 3.0;
}

SelectionMonotonicityReport verify_selection_monotonicity(std::vector<double> accuracies,
                                                          std::vector<double> sigmas,
                                                          std::int64_t replications,
                                                          std::uint64_t seed) {
  if (accuracies.size() < 2) throw std::invalid_argument("need at least 2 agents");
  for (std::size_t i = 1; i < accuracies.size(); ++i)
    if (accuracies[i] >= accuracies[0])
      throw std::invalid_argument("the first accuracy must be the unique maximum");
  SelectionMonotonicityReport report;
  report.accuracies = accuracies;
  report.replications = replications;
  report.seed = seed;

  const auto run_sigma = [&](double sigma, std::uint64_t stream) {
    if (sigma == 0.0) return 1.0;  // noiseless argmax picks the unique maximum
    Rng rng(substream_seed(seed, "selection-noise", stream));
    std::int64_t hits = 0;
    std::vector<double> scores(accuracies.size());
    for (std::int64_t r = 0; r < replications; ++r) {
      for (std::size_t i = 0; i < accuracies.size(); ++i)
        scores[i] = accuracies[i] + sigma * rng.normal();
      const std::size_t best = static_cast<std::size_t>(
          std::max_element(scores.begin(), scores.end()) - scores.begin());
      if (best == 0) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(replications);
  };

  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    SelectionNoisePoint pt;
    pt.sigma = sigmas[i];
    pt.empirical = run_sigma(sigmas[i], i);
    pt.predicted = sigmas[i] == 0.0 ? 1.0 : selection_probability_oracle(accuracies, sigmas[i]);
    report.points.push_back(pt);
  }
  report.uniform_limit_empirical = run_sigma(report.uniform_limit_sigma, 9999);

  report.closed_form_pass = true;
  for (const auto& pt : report.points)
    report.closed_form_pass =
        report.closed_form_pass && std::abs(pt.empirical - pt.predicted) <= 0.01;

  report.monotone_pass = true;
  const double se_slack =
      3.0 * std::sqrt(0.5 / static_cast<double>(replications));  // 3 SE at worst-case p = 0.5
  for (std::size_t i = 1; i < report.points.size(); ++i)
    report.monotone_pass = report.monotone_pass &&
                           report.points[i].empirical <= report.points[i - 1].empirical + se_slack;

  const double uniform = 1.0 / static_cast<double>(accuracies.size());
  report.endpoint_pass = report.points.front().sigma == 0.0
                             ? report.points.front().empirical == 1.0
                             : true;
  report.endpoint_pass = report.endpoint_pass &&
                         std::abs(report.uniform_limit_empirical - uniform) <= 0.01;
  report.pass = report.closed_form_pass && report.monotone_pass && report.endpoint_pass;
  return report;
}

}  // namespace margin
