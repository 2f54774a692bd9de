#pragma once

#include <span>
#include <string>
#include <vector>

#include "margin/types.hpp"

namespace margin {

enum class BaselineKind { Temperature, Platt, Histogram };

// A design-time correction, fitted once on a calibration split and then
// frozen: apply() is pure and total.
struct FittedBaseline {
  BaselineKind kind = BaselineKind::Temperature;
  std::string agent;
  double temperature = 1.0;           // Temperature
  double platt_a = 1.0;               // Platt: sigmoid(a * logit(c) + b)
  double platt_b = 0.0;
  int bin_count = 10;                 // Histogram
  std::vector<double> bin_values;
  double epsilon = 1e-6;
  bool at_boundary = false;           // fit was driven to a search boundary

  double apply(double confidence) const;
};

double logit(double p, double epsilon);
double sigmoid(double z);

// Negative log-likelihood of a fitted correction on a prediction set.
double baseline_nll(const FittedBaseline& baseline, std::span<const Prediction> data);

inline constexpr double kTemperatureMin = 0.05;
inline constexpr double kTemperatureMax = 20.0;

// Scalar temperature on logit(confidence), fitted by a 200-point log-spaced
// grid scan over [0.05, 20] followed by golden-section refinement to
// |dT| < 1e-4. Single-class data drives T to a boundary; the boundary value is
// returned with at_boundary set.
FittedBaseline fit_temperature(std::span<const Prediction> calibration, double epsilon = 1e-6);

// Logistic fit sigmoid(a * logit(c) + b) by damped Newton iterations (max 100,
// gradient norm < 1e-8), with a coordinate grid-search fallback on
// non-convergence. Degenerate single-class data yields a flagged constant fit.
FittedBaseline fit_platt(std::span<const Prediction> calibration, double epsilon = 1e-6);

// Equal-width histogram binning: each bin's value is the mean correctness of
// the calibration points it holds; empty bins keep their midpoint.
FittedBaseline fit_histogram(std::span<const Prediction> calibration, int bin_count = 10);

}  // namespace margin
