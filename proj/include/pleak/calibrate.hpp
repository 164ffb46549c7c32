#pragma once

#include "pleak/smooth.hpp"

namespace pleak::sensderiv {

// Noise calibration for one analyzed table: generalized Cauchy noise with
// density proportional to 1 / (1 + |z / lambda|^gamma).
struct CalibrationResult {
  double sensitivity = 0;   // derivative sensitivity c(D)
  double smoothBound = 0;   // beta-smooth bound S_beta(D)
  double epsilon = 0;
  double beta = 0;
  double gamma = 0;
  double sigmoidA = 0;
  double confidence = 0;
  double noiseScale = 0;    // lambda = S / (epsilon - (gamma+1) beta)
  double output = 0;        // concrete query answer y
  double relativeErrorPct = 0;  // quantile * lambda / |y| * 100; inf for y = 0
};

// Quantile t with P(|Z| <= t) = conf for the standardized density
// 1 / (1 + |z|^gamma), via numerical integration and bisection.
double gen_cauchy_quantile(double gamma, double conf);

CalibrationResult calibrate_noise(double smoothBound, double output, const SmoothParams &p);

} // namespace pleak::sensderiv
