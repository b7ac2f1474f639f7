#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "uhr/errors.hpp"
#include "uhr/huber.hpp"
#include "uhr/types.hpp"

namespace uhr::streaming {

struct BatchData {
  Mat X;
  Vec y;
  long batch_index = 0;  // 1-based position in the stream, for diagnostics

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }
};

struct LocalFit {
  Vec coef;
  Index n = 0;
};

// Running summaries for the updating estimator. U accumulates the per-batch
// Gram matrices and V accumulates Gram times the local coefficients, so the
// state stays p x p no matter how many rows went past. Batch order does not
// matter beyond floating point rounding.
struct UpdatingState {
  Mat U;
  Vec V;
  long n_total = 0;
  long b_seen = 0;
  long batches_skipped = 0;  // only grows under IngestPolicy::kSkipSingular
  bool keep_local_fits = false;
  std::vector<LocalFit> local_fits;

  Index dim() const { return V.size(); }
};

UpdatingState new_state(Index p, bool keep_local_fits = false);

enum class IngestPolicy {
  kStrict,        // any local fit failure aborts the stream
  kSkipSingular,  // numerically bad batches are skipped and counted
};

// Fits the batch locally and folds it into the summaries. The batch must
// have more rows than columns. Local fit errors are annotated with the batch
// index; under kSkipSingular, singular or scale-degenerate batches are
// dropped with a note on stderr instead.
UpdatingState ingest_batch(const UpdatingState& state, const BatchData& batch,
                           const huber::HuberConfig& cfg = {},
                           IngestPolicy policy = IngestPolicy::kStrict);

// Solves U coef = V. Valid at any point of the stream; the state is not
// consumed.
Vec finalize(const UpdatingState& state);

// Sums two summary states. new_state(p) is the identity; the operation is
// commutative and associative up to floating point rounding.
UpdatingState merge(const UpdatingState& a, const UpdatingState& b);

// Recursive least squares over batches: exact streaming least squares.
struct RlsState {
  Mat A;
  Vec c;
  long n_total = 0;

  Index dim() const { return c.size(); }
};

RlsState rls_new_state(Index p);
RlsState rls_ingest(const RlsState& state, const BatchData& batch);
Vec rls_finalize(const RlsState& state);

// Sample-size weighted average of per-batch coefficient vectors.
Vec dc_aggregate(const std::vector<LocalFit>& fits);

// Snapshot format: a versioned JSON object holding p, U (row major), V,
// n_total and b_seen, plus local_fits when they were retained. Numbers
// round-trip bit for bit.
nlohmann::json to_snapshot_json(const UpdatingState& state);
UpdatingState from_snapshot_json(const nlohmann::json& j);
void save_snapshot(const std::string& path, const UpdatingState& state);
UpdatingState load_snapshot(const std::string& path);

}  // namespace uhr::streaming
