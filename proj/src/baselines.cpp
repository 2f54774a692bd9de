#include "margin/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace margin {

double logit(double p, double epsilon) {
  const double c = std::clamp(p, epsilon, 1.0 - epsilon);
  return std::log(c / (1.0 - c));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double FittedBaseline::apply(double confidence) const {
  switch (kind) {
    case BaselineKind::Temperature:
      return sigmoid(logit(confidence, epsilon) / temperature);
    case BaselineKind::Platt:
      return sigmoid(platt_a * logit(confidence, epsilon) + platt_b);
    case BaselineKind::Histogram: {
      int idx = static_cast<int>(std::clamp(confidence, 0.0, 1.0) * bin_count);
      if (idx >= bin_count) idx = bin_count - 1;
      return bin_values[static_cast<std::size_t>(idx)];
    }
  }
  return confidence;
}

namespace {

double point_nll(double p, int correct, double epsilon) {
  const double q = std::clamp(p, epsilon, 1.0 - epsilon);
  return correct == 1 ? -std::log(q) : -std::log(1.0 - q);
}

void require_nonempty(std::span<const Prediction> data, const char* what) {
  if (data.empty()) throw std::invalid_argument(std::string(what) + ": empty calibration set");
}

bool single_class(std::span<const Prediction> data) {
  const int first = data.front().correct;
  return std::all_of(data.begin(), data.end(),
                     [first](const Prediction& p) { return p.correct == first; });
}

}  // namespace

double baseline_nll(const FittedBaseline& baseline, std::span<const Prediction> data) {
  double nll = 0.0;
  for (const auto& p : data) nll += point_nll(baseline.apply(p.confidence), p.correct, baseline.epsilon);
  return nll;
}

FittedBaseline fit_temperature(std::span<const Prediction> calibration, double epsilon) {
  require_nonempty(calibration, "fit_temperature");

  std::vector<double> zs;
  zs.reserve(calibration.size());
  for (const auto& p : calibration) zs.push_back(logit(p.confidence, epsilon));

  const auto nll = [&](double t) {
    double v = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i)
      v += point_nll(sigmoid(zs[i] / t), calibration[i].correct, epsilon);
    return v;
  };

  constexpr int kGridPoints = 200;
  const double log_lo = std::log(kTemperatureMin);
  const double log_hi = std::log(kTemperatureMax);
  int best = 0;
  double best_nll = nll(kTemperatureMin);
  std::vector<double> grid(kGridPoints);
  grid[0] = kTemperatureMin;
  for (int i = 1; i < kGridPoints; ++i) {
    grid[static_cast<std::size_t>(i)] =
        std::exp(log_lo + (log_hi - log_lo) * i / (kGridPoints - 1));
    const double v = nll(grid[static_cast<std::size_t>(i)]);
    if (v < best_nll) {
      best_nll = v;
      best = i;
    }
  }

  // Golden-section refinement on the bracketing interval.
  double lo = grid[static_cast<std::size_t>(std::max(0, best - 1))];
  double hi = grid[static_cast<std::size_t>(std::min(kGridPoints - 1, best + 1))];
  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = hi - kInvPhi * (hi - lo);
  double x2 = lo + kInvPhi * (hi - lo);
  double f1 = nll(x1), f2 = nll(x2);
  while (hi - lo > 1e-4) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = nll(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = nll(x2);
    }
  }

  FittedBaseline fit;
  fit.kind = BaselineKind::Temperature;
  fit.epsilon = epsilon;
  fit.temperature = 0.5 * (lo + hi);
  fit.at_boundary = fit.temperature <= kTemperatureMin * 1.001 ||
                    fit.temperature >= kTemperatureMax * 0.999 || single_class(calibration);
  return fit;
}

FittedBaseline fit_platt(std::span<const Prediction> calibration, double epsilon) {
  require_nonempty(calibration, "fit_platt");

  FittedBaseline fit;
  fit.kind = BaselineKind::Platt;
  fit.epsilon = epsilon;

  if (single_class(calibration)) {
    // All-correct or all-wrong: NLL pushes b to infinity; return the clamped
    // base-rate constant instead.
    double rate = 0.0;
    for (const auto& p : calibration) rate += p.correct;
    rate /= static_cast<double>(calibration.size());
    fit.platt_a = 0.0;
    fit.platt_b = logit(rate, epsilon);
    fit.at_boundary = true;
    return fit;
  }

  std::vector<double> zs;
  zs.reserve(calibration.size());
  for (const auto& p : calibration) zs.push_back(logit(p.confidence, epsilon));

  const auto nll = [&](double a, double b) {
    double v = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i)
      v += point_nll(sigmoid(a * zs[i] + b), calibration[i].correct, epsilon);
    return v;
  };

  double a = 1.0, b = 0.0;
  double cur = nll(a, b);
  double lambda = 1e-3;
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      const double p = sigmoid(a * zs[i] + b);
      const double e = p - static_cast<double>(calibration[i].correct);
      const double w = p * (1.0 - p);
      ga += e * zs[i];
      gb += e;
      haa += w * zs[i] * zs[i];
      hab += w * zs[i];
      hbb += w;
    }
    if (std::max(std::abs(ga), std::abs(gb)) < 1e-8) {
      converged = true;
      break;
    }
    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      const double daa = haa + lambda, dbb = hbb + lambda;
      const double det = daa * dbb - hab * hab;
      if (det > 0.0) {
        const double step_a = (dbb * ga - hab * gb) / det;
        const double step_b = (daa * gb - hab * ga) / det;
        const double na = a - step_a, nb = b - step_b;
        const double nv = nll(na, nb);
        if (nv <= cur) {
          a = na;
          b = nb;
          cur = nv;
          lambda = std::max(lambda / 3.0, 1e-10);
          stepped = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!stepped) break;
  }

  if (!converged) {
    // Coordinate grid search with two zoom passes, keeping the better fit.
    double ga = -2.0, gb_lo = -6.0;
    double span_a = 8.0, span_b = 12.0;
    double best_a = a, best_b = b, best_v = cur;
    for (int pass = 0; pass < 3; ++pass) {
      constexpr int kSteps = 41;
      for (int i = 0; i < kSteps; ++i) {
        for (int j = 0; j < kSteps; ++j) {
          const double ca = ga + span_a * i / (kSteps - 1);
          const double cb = gb_lo + span_b * j / (kSteps - 1);
          const double v = nll(ca, cb);
          if (v < best_v) {
            best_v = v;
            best_a = ca;
            best_b = cb;
          }
        }
      }
      span_a /= 10.0;
      span_b /= 10.0;
      ga = best_a - span_a / 2.0;
      gb_lo = best_b - span_b / 2.0;
    }
    a = best_a;
    b = best_b;
    fit.at_boundary = true;
  }

  fit.platt_a = a;
  fit.platt_b = b;
  return fit;
}

FittedBaseline fit_histogram(std::span<const Prediction> calibration, int bin_count) {
  require_nonempty(calibration, "fit_histogram");
  if (bin_count < 1) throw std::invalid_argument("fit_histogram: bin_count must be >= 1");

  FittedBaseline fit;
  fit.kind = BaselineKind::Histogram;
  fit.bin_count = bin_count;
  std::vector<double> sums(static_cast<std::size_t>(bin_count), 0.0);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bin_count), 0);
  for (const auto& p : calibration) {
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0))
      throw std::invalid_argument("fit_histogram: confidence out of range [0,1]");
    int idx = static_cast<int>(p.confidence * bin_count);
    if (idx >= bin_count) idx = bin_count - 1;
    sums[static_cast<std::size_t>(idx)] += static_cast<double>(p.correct);
    counts[static_cast<std::size_t>(idx)] += 1;
  }
  fit.bin_values.resize(static_cast<std::size_t>(bin_count));
  for (int b = 0; b < bin_count; ++b) {
    const auto i = static_cast<std::size_t>(b);
    fit.bin_values[i] = counts[i] > 0 ? sums[i] / static_cast<double>(counts[i])
                                      : (b + 0.5) / static_cast<double>(bin_count);
  }
  return fit;
}

}  // namespace margin
