#include "uhr/huber.hpp"

#include <limits>
#include <vector>

#include "uhr/linalg.hpp"

namespace uhr::huber {

namespace {

double median_inplace(std::vector<double>& v) {
  const auto n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// Raw median absolute deviation, without the consistency constant.
double mad_raw(const Vec& r) {
  std::vector<double> buf(r.data(), r.data() + r.size());
  const double med = median_inplace(buf);
  for (auto& x : buf) x = std::abs(x - med);
  return median_inplace(buf);
}

void validate_config(const HuberConfig& cfg) {
  if (!(cfg.k > 0) || !std::isfinite(cfg.k))
    throw InvalidInput("fit_huber: k must be positive and finite");
  if (!(cfg.rel_tol > 0) || cfg.rel_tol >= 1)
    throw InvalidInput("fit_huber: rel_tol must be in (0, 1)");
  if (cfg.max_iter < 1) throw InvalidInput("fit_huber: max_iter must be >= 1");
  if (cfg.scale_policy == HuberConfig::ScalePolicy::kFixed &&
      (!(cfg.scale > 0) || !std::isfinite(cfg.scale)))
    throw InvalidInput("fit_huber: fixed scale must be positive and finite");
}

}  // namespace

double mad_scale(const Vec& residuals) {
  if (residuals.size() < 2)
    throw InvalidInput("mad_scale: need at least two residuals");
  if (!residuals.allFinite())
    throw InvalidInput("mad_scale: non-finite residuals");
  const double mad = mad_raw(residuals);
  if (!(mad > 0))
    throw DegenerateScale("mad_scale: median absolute deviation is zero");
  return mad / 0.6745;
}

HuberFit fit_huber(const Mat& X, const Vec& y, const HuberConfig& cfg,
                   const std::optional<Vec>& init) {
  validate_config(cfg);
  const Index n = X.rows();
  const Index p = X.cols();
  if (n <= p) throw InvalidInput("fit_huber: need more rows than columns");
  if (y.size() != n) throw InvalidInput("fit_huber: X and y sizes disagree");
  if (!X.allFinite() || !y.allFinite())
    throw InvalidInput("fit_huber: non-finite data");
  if (init && init->size() != p)
    throw InvalidInput("fit_huber: init has wrong length");

  HuberFit fit;
  fit.n_obs = n;
  fit.coef = init ? *init : linalg::solve_spd(linalg::gram(X), Vec(X.transpose() * y));
  fit.scale = cfg.scale;

  Vec r(n), w(n);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    r = y - X * fit.coef;
    double sigma = cfg.scale;
    if (cfg.scale_policy == HuberConfig::ScalePolicy::kMadReestimated) {
      const double mad = mad_raw(r);
      if (!(mad > 0)) {
        // Zero spread means either an exact interpolation, which is a valid
        // converged fit, or genuinely degenerate residuals.
        const double rmax = r.cwiseAbs().maxCoeff();
        const double ymax = std::max(1.0, y.cwiseAbs().maxCoeff());
        if (rmax <= 1e-10 * ymax) {
          fit.scale = std::max(rmax, std::numeric_limits<double>::min()) / 0.6745;
          fit.iterations = it;
          fit.converged = true;
          return fit;
        }
        throw DegenerateScale("fit_huber: residual spread collapsed to zero");
      }
      sigma = mad / 0.6745;
    }
    const double k_eff =
        cfg.k_policy == HuberConfig::KPolicy::kFixed ? cfg.k : cfg.k * sigma;
    for (Index i = 0; i < n; ++i) w[i] = irls_weight(r[i], k_eff);
    auto [A, m] = linalg::weighted_gram_and_moment(X, y, w);
    const Vec next = linalg::solve_spd(A, m);
    double delta = 0;
    for (Index j = 0; j < p; ++j)
      delta = std::max(delta, std::abs(next[j] - fit.coef[j]) /
                                  std::max(1.0, std::abs(next[j])));
    fit.coef = next;
    fit.scale = sigma;
    fit.iterations = it;
    if (delta <= cfg.rel_tol) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace uhr::huber
