#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "uhr/huber.hpp"
#include "uhr/streaming.hpp"
#include "uhr/types.hpp"

namespace uhr::inference {

// Moments of the clipped residual score: e_psi2 = mean psi(r, k)^2 and
// e_dpsi = fraction of residuals strictly inside (-k, k). The kink itself
// counts as exterior.
struct PsiMoments {
  double e_psi2 = 0;
  double e_dpsi = 0;
  long n_used = 0;
};

PsiMoments psi_moments(const Vec& residuals, double k);

// Threshold for moment estimation under a config: the fixed k, or the scaled
// multiple of the spread of the given residuals.
double resolve_moment_k(const Vec& residuals, const huber::HuberConfig& cfg);

struct CovReport {
  Mat cov;
  Vec se;
  Vec t_values;  // coefficient over its standard error, zero null
};

// Plug-in covariance of the finalized coefficients:
//   cov = (e_psi2 / e_dpsi^2) * U^{-1}.
// Requires e_dpsi > 0; throws DegenerateMoments otherwise.
CovReport uhr_covariance(const streaming::UpdatingState& state,
                         const PsiMoments& m);

// Pull-based batch stream: returns batches in order, then nullopt. A
// replayable stream hands out a fresh pass over the same data every call.
using BatchStream = std::function<std::optional<streaming::BatchData>()>;
using ReplayableStream = std::function<BatchStream()>;

// Wraps an in-memory batch list as a replayable stream.
ReplayableStream replay_batches(std::vector<streaming::BatchData> batches);

// Nonparametric standard errors: B replicates, each resampling rows with
// replacement inside every batch, running the full updating pipeline, and
// taking the per-coefficient standard deviation across replicates. Replicate
// r resamples batch t with the generator stream (seed, r, t), so results do
// not depend on the worker count. Failed replicates are skipped with a note;
// more than half failing raises BootstrapFailed.
Vec bootstrap_se(const ReplayableStream& source, const huber::HuberConfig& cfg,
                 int B, std::uint64_t seed, int n_threads = 0);

}  // namespace uhr::inference
