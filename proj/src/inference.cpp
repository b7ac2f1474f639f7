#include "uhr/inference.hpp"

#include <cmath>
#include <iostream>
#include <memory>
#include <vector>

#include "uhr/linalg.hpp"
#include "uhr/parallel.hpp"
#include "uhr/rng.hpp"

namespace uhr::inference {

PsiMoments psi_moments(const Vec& residuals, double k) {
  const Index n = residuals.size();
  if (n < 2) throw InvalidInput("psi_moments: need at least two residuals");
  if (!residuals.allFinite())
    throw InvalidInput("psi_moments: non-finite residuals");
  if (!(k > 0)) throw InvalidInput("psi_moments: k must be positive");
  PsiMoments m;
  m.n_used = n;
  double sum2 = 0;
  long interior = 0;
  for (Index i = 0; i < n; ++i) {
    const double s = huber::psi(residuals[i], k);
    sum2 += s * s;
    if (std::abs(residuals[i]) < k) ++interior;
  }
  m.e_psi2 = sum2 / static_cast<double>(n);
  m.e_dpsi = static_cast<double>(interior) / static_cast<double>(n);
  return m;
}

double resolve_moment_k(const Vec& residuals, const huber::HuberConfig& cfg) {
  if (cfg.k_policy == huber::HuberConfig::KPolicy::kFixed) return cfg.k;
  return cfg.k * huber::mad_scale(residuals);
}

CovReport uhr_covariance(const streaming::UpdatingState& state,
                         const PsiMoments& m) {
  if (!(m.e_dpsi > 0))
    throw DegenerateMoments(
        "uhr_covariance: every residual sits at or beyond the clipping "
        "threshold, covariance is undefined");
  if (m.e_psi2 < 0 || !std::isfinite(m.e_psi2))
    throw InvalidInput("uhr_covariance: bad e_psi2");
  const double ratio = m.e_psi2 / (m.e_dpsi * m.e_dpsi);
  CovReport rep;
  rep.cov = ratio * linalg::spd_inverse(state.U);
  const Vec coef = streaming::finalize(state);
  const Index p = state.dim();
  rep.se = rep.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  rep.t_values = Vec::Zero(p);
  for (Index j = 0; j < p; ++j)
    rep.t_values[j] = rep.se[j] > 0 ? coef[j] / rep.se[j] : 0.0;
  return rep;
}

ReplayableStream replay_batches(std::vector<streaming::BatchData> batches) {
  auto shared = std::make_shared<std::vector<streaming::BatchData>>(
      std::move(batches));
  return [shared]() -> BatchStream {
    auto pos = std::make_shared<size_t>(0);
    return [shared, pos]() -> std::optional<streaming::BatchData> {
      if (*pos >= shared->size()) return std::nullopt;
      return (*shared)[(*pos)++];
    };
  };
}

namespace {

streaming::BatchData resample_rows(const streaming::BatchData& batch,
                                   rng::Philox4x32& g) {
  const Index n = batch.n();
  streaming::BatchData out;
  out.batch_index = batch.batch_index;
  out.X.resize(n, batch.p());
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index pick = static_cast<Index>(
        g.next_below(static_cast<std::uint64_t>(n)));
    out.X.row(i) = batch.X.row(pick);
    out.y[i] = batch.y[pick];
  }
  return out;
}

}  // namespace

Vec bootstrap_se(const ReplayableStream& source, const huber::HuberConfig& cfg,
                 int B, std::uint64_t seed, int n_threads) {
  if (B < 1) throw InvalidInput("bootstrap_se: B must be >= 1");
  std::vector<std::optional<Vec>> estimates(static_cast<size_t>(B));
  parallel_for(
      B,
      [&](long r) {
        try {
          BatchStream stream = source();
          std::optional<streaming::UpdatingState> state;
          long t = 0;
          while (auto batch = stream()) {
            ++t;
            rng::Philox4x32 g(seed, static_cast<std::uint64_t>(r) + 1,
                              static_cast<std::uint64_t>(t));
            const streaming::BatchData res = resample_rows(*batch, g);
            if (!state) state = streaming::new_state(res.p());
            state = streaming::ingest_batch(*state, res, cfg);
          }
          if (!state) throw InvalidInput("bootstrap_se: empty stream");
          estimates[static_cast<size_t>(r)] = streaming::finalize(*state);
        } catch (const Error& e) {
          std::cerr << "bootstrap_se: replicate " << (r + 1)
                    << " failed: " << e.what() << "\n";
        }
      },
      n_threads);

  // Ordered reduction over replicate index keeps the result independent of
  // scheduling.
  long ok = 0;
  Index p = 0;
  for (const auto& est : estimates)
    if (est) {
      ++ok;
      p = est->size();
    }
  if (ok * 2 < B)
    throw BootstrapFailed("bootstrap_se: " + std::to_string(B - ok) + " of " +
                          std::to_string(B) + " replicates failed");
  if (ok <= 1) return Vec::Zero(p);
  Vec mean = Vec::Zero(p);
  for (const auto& est : estimates)
    if (est) mean += *est;
  mean /= static_cast<double>(ok);
  Vec ss = Vec::Zero(p);
  for (const auto& est : estimates)
    if (est) ss += (*est - mean).cwiseAbs2();
  return (ss / static_cast<double>(ok - 1)).cwiseSqrt();
}

}  // namespace uhr::inference
