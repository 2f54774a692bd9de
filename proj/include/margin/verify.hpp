#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace margin {

// Numeric checks of the calibrator's closed-form properties. Every "predicted"
// column is computed from the closed form, independent of the simulation path.
// All checks are reproducible: a fixed seed fixes the pass flags and every
// reported number.

// Iterated EWMA vs its exponential-discounting expansion, plus the exact
// weight-sum identity (a constant input is a fixed point, bit-exactly).
struct ClosedFormReport {
  int pair_count = 0;
  std::int64_t steps = 0;
  std::uint64_t seed = 0;
  double max_abs_difference = 0.0;
  double tolerance = 1e-12;
  bool weight_sum_exact = false;
  bool pass = false;
};
ClosedFormReport verify_closed_form(int pair_count = 20, std::int64_t steps = 300,
                                    std::uint64_t seed = 1);

// Convergence to the stationary distribution under i.i.d. Bernoulli outcomes:
// mean theta + (1-a)^t (a0 - theta), variance a/(2-a) theta(1-theta)(1-(1-a)^2t).
struct ConvergencePoint {
  std::int64_t t = 0;
  double empirical_mean = 0.0, predicted_mean = 0.0;
  double empirical_var = 0.0, predicted_var = 0.0;
};
struct ConvergenceReport {
  double alpha = 0.0, theta = 0.0, initial_estimate = 0.0;
  std::int64_t horizon = 0, replications = 0;
  std::uint64_t seed = 0;
  double empirical_mean = 0.0, predicted_mean = 0.0;
  double empirical_variance = 0.0, predicted_variance = 0.0;
  double empirical_std = 0.0, predicted_std = 0.0;
  double mean_tolerance = 0.0;  // 4 standard errors
  double variance_rel_tolerance = 0.05;
  bool mean_pass = false, variance_pass = false, pass = false;
  std::vector<ConvergencePoint> series;
};
ConvergenceReport verify_convergence(double alpha = 0.04, double theta = 0.79,
                                     double initial_estimate = 0.5, std::int64_t horizon = 2000,
                                     std::int64_t replications = 10000, std::uint64_t seed = 2);

// Recovery after an abrupt accuracy shift: the replication-averaged bias falls
// below the tolerance after about (1/a) ln(|delta|/eps) observations.
struct TrackingReport {
  double alpha = 0.0, theta_before = 0.0, theta_after = 0.0, tolerance = 0.0;
  std::int64_t replications = 0;
  std::uint64_t seed = 0;
  double predicted_recovery = 0.0;
  std::int64_t empirical_recovery = -1;
  double rel_tolerance = 0.20;
  bool pass = false;
  std::vector<double> bias_curve;  // replication-averaged |mean - theta_after| per step
};
TrackingReport verify_tracking(double alpha = 0.04, double theta_before = 0.60,
                               double delta = 0.20, double tolerance = 0.01,
                               std::int64_t replications = 10000, std::uint64_t seed = 3);

// Bias-variance tradeoff under linear drift: mean absolute error stays under
// drift/(2a) + sqrt(a theta(1-theta)/(2-a)) for every learning rate, and an
// interior grid point achieves the minimum.
struct UshapePoint {
  double alpha = 0.0;
  double empirical_error = 0.0;
  double bound = 0.0;
};
struct UshapeReport {
  double drift = 0.0, theta0 = 0.0;
  std::int64_t burn_in = 0, window = 0, replications = 0;
  std::uint64_t seed = 0;
  std::vector<UshapePoint> points;
  std::size_t argmin = 0;
  bool bound_pass = false, interior_minimum = false, pass = false;
};
UshapeReport verify_ushape(std::vector<double> alphas = {0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32},
                           double drift = 1.5e-4, double theta0 = 0.34,
                           std::int64_t burn_in = 600, std::int64_t window = 1200,
                           std::int64_t replications = 600, std::uint64_t seed = 4);

// Asymmetric update rates converge to up*theta / (up*theta + down*(1-theta)),
// equal to theta only in the symmetric case.
struct AsymmetricReport {
  double alpha_up = 0.0, alpha_down = 0.0, theta = 0.0;
  std::int64_t horizon = 0, replications = 0;
  std::uint64_t seed = 0;
  double empirical_fixed_point = 0.0, predicted_fixed_point = 0.0, predicted_bias = 0.0;
  double tolerance = 0.01;
  bool pass = false;
};
AsymmetricReport verify_asymmetric(double alpha_up = 0.02, double alpha_down = 0.06,
                                   double theta = 0.8, std::int64_t horizon = 2500,
                                   std::int64_t replications = 10000, std::uint64_t seed = 5);

// Probability of selecting the best of N agents under zero-mean Gaussian
// confidence noise is non-increasing in the noise scale; the two-agent closed
// form is Phi((p1-p2)/(sigma sqrt(2))).
struct SelectionNoisePoint {
  double sigma = 0.0;
  double empirical = 0.0;
  double predicted = 0.0;
};
struct SelectionMonotonicityReport {
  std::vector<double> accuracies;
  std::int64_t replications = 0;
  std::uint64_t seed = 0;
  std::vector<SelectionNoisePoint> points;
  double uniform_limit_sigma = 50.0;
  double uniform_limit_empirical = 0.0;
  bool monotone_pass = false, endpoint_pass = false, closed_form_pass = false, pass = false;
};
SelectionMonotonicityReport verify_selection_monotonicity(
    std::vector<double> accuracies = {0.8, 0.6},
    std::vector<double> sigmas = {0.0, 0.05, 0.1, 0.2, 0.4, 0.8},
    std::int64_t replications = 200000, std::uint64_t seed = 6);

// Quadrature oracle for the selection probability (exact for any N).
double selection_probability_oracle(std::span<const double> accuracies, double sigma);

}  // namespace margin
