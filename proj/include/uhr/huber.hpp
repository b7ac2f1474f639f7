#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "uhr/errors.hpp"
#include "uhr/types.hpp"

namespace uhr::huber {

// Piecewise loss: quadratic inside [-k, k], linear with matched value and
// slope outside.
inline double rho(double u, double k) {
  const double a = std::abs(u);
  return a < k ? 0.5 * u * u : k * a - 0.5 * k * k;
}

// Derivative of rho: identity inside [-k, k], clipped to +-k outside.
inline double psi(double u, double k) { return std::clamp(u, -k, k); }

// Weight that turns the score equation into weighted least squares.
inline double irls_weight(double u, double k) {
  const double a = std::abs(u);
  return a <= k ? 1.0 : k / a;
}

// Median absolute deviation from the median, divided by 0.6745 so the result
// is consistent for the standard deviation under normal errors. Throws
// DegenerateScale when the deviations are all zero.
double mad_scale(const Vec& residuals);

struct HuberConfig {
  enum class KPolicy {
    kFixed,   // threshold k used as given, in response units
    kScaled,  // threshold is k times the current scale estimate
  };
  enum class ScalePolicy {
    kFixed,           // scale supplied by the caller
    kMadReestimated,  // scale recomputed from residuals at every iteration
  };

  KPolicy k_policy = KPolicy::kScaled;
  double k = 1.345;
  ScalePolicy scale_policy = ScalePolicy::kMadReestimated;
  double scale = 1.0;  // used only when scale_policy == kFixed
  int max_iter = 1000;
  double rel_tol = 1e-8;

  static HuberConfig fixed_k(double k, double scale) {
    HuberConfig c;
    c.k_policy = KPolicy::kFixed;
    c.k = k;
    c.scale_policy = ScalePolicy::kFixed;
    c.scale = scale;
    return c;
  }
};

struct HuberFit {
  Vec coef;
  double scale = 0;
  int iterations = 0;
  bool converged = false;
  Index n_obs = 0;
};

// Iteratively reweighted least squares from an ordinary least squares start
// (or the supplied one). Convergence is max_j |delta_j| / max(1, |coef_j|)
// <= rel_tol; running out of iterations reports converged = false rather
// than throwing.
HuberFit fit_huber(const Mat& X, const Vec& y, const HuberConfig& cfg = {},
                   const std::optional<Vec>& init = std::nullopt);

}  // namespace uhr::huber
