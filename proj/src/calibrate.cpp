#include "pleak/calibrate.hpp"

#include <cmath>
#include <limits>

namespace pleak::sensderiv {

namespace {

// Adaptive Simpson on [a, b] for f, tolerance tol.
double simpson_segment(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson(const F &f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson_segment(a, m, fa, flm, fm);
  double right = simpson_segment(m, b, fm, frm, fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

template <typename F>
double integrate(const F &f, double a, double b, double tol = 1e-12) {
  if (a == b)
    return 0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = simpson_segment(a, b, fa, fm, fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

} // namespace

double gen_cauchy_quantile(double gamma, double conf) {
  if (gamma <= 1)
    fail(ErrorKind::InfeasibleSmoothness, "generalized Cauchy needs gamma > 1");
  if (!(conf >= 0 && conf < 1))
    fail(ErrorKind::InfeasibleSmoothness, "confidence must lie in [0, 1)");
  if (conf == 0)
    return 0;

  auto density = [gamma](double z) { return 1.0 / (1.0 + std::pow(std::fabs(z), gamma)); };

  // One-sided total mass: integral_0^1 + tail via the substitution z = 1/u,
  // which maps [1, inf) to (0, 1] with integrand u^(gamma-2) / (1 + u^gamma).
  double head = integrate(density, 0.0, 1.0);
  auto tailf = [gamma](double u) {
    if (u <= 0)
      return 0.0;
    return std::pow(u, gamma - 2.0) / (1.0 + std::pow(u, gamma));
  };
  // a second substitution u = w^k removes the u^(gamma-2) singularity for
  // gamma < 2
  double k = std::max(1.0, 2.0 / (gamma - 1.0));
  auto tailSmooth = [&](double w) {
    double u = std::pow(w, k);
    return tailf(u) * k * std::pow(w, k - 1.0);
  };
  double tail = integrate(tailSmooth, 0.0, 1.0);
  double total = head + tail;

  double target = conf * total;  // integral_0^t density = conf * total

  auto cdf = [&](double t) { return integrate(density, 0.0, t); };

  double hi = 1.0;
  while (cdf(hi) < target && hi < 1e18)
    hi *= 2.0;
  double lo = 0.0;
  // bisect to |delta conf| <= 1e-9
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double c = cdf(mid) / total;
    if (std::fabs(c - conf) <= 1e-9 * 0.5)
      return mid;
    if (c < conf)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

CalibrationResult calibrate_noise(double smoothBound, double output, const SmoothParams &p) {
  p.validate();
  if (smoothBound < 0)
    fail(ErrorKind::InfeasibleSmoothness, "sensitivity must be nonnegative");

  CalibrationResult r;
  r.smoothBound = smoothBound;
  r.sensitivity = smoothBound;
  r.epsilon = p.epsilon;
  r.beta = p.beta;
  r.gamma = p.gamma;
  r.sigmoidA = p.sigmoidA;
  r.confidence = p.confidence;
  r.output = output;

  double denom = p.epsilon - (p.gamma + 1.0) * p.beta;  // > 0 by validate()
  r.noiseScale = smoothBound / denom;

  if (r.noiseScale == 0) {
    r.relativeErrorPct = 0;
    return r;
  }
  double q = gen_cauchy_quantile(p.gamma, p.confidence);
  if (output == 0) {
    r.relativeErrorPct = std::numeric_limits<double>::infinity();
    return r;
  }
  r.relativeErrorPct = q * r.noiseScale / std::fabs(output) * 100.0;
  return r;
}

} // namespace pleak::sensderiv
