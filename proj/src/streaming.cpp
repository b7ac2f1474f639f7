#include "uhr/streaming.hpp"

#include <fstream>
#include <iostream>

#include "uhr/linalg.hpp"

namespace uhr::streaming {

namespace {

void check_batch(const UpdatingState& state, const BatchData& batch) {
  if (batch.p() != state.dim())
    throw InvalidInput("ingest_batch: batch " + std::to_string(batch.batch_index) +
                       " has " + std::to_string(batch.p()) +
                       " predictors, state expects " +
                       std::to_string(state.dim()));
  if (batch.y.size() != batch.n())
    throw InvalidInput("ingest_batch: batch " + std::to_string(batch.batch_index) +
                       ": X and y sizes disagree");
  if (batch.n() <= batch.p())
    throw InvalidInput("ingest_batch: batch " + std::to_string(batch.batch_index) +
                       " has n <= p and cannot be fit locally");
}

}  // namespace

UpdatingState new_state(Index p, bool keep_local_fits) {
  if (p < 1) throw InvalidInput("new_state: p must be positive");
  UpdatingState s;
  s.U = Mat::Zero(p, p);
  s.V = Vec::Zero(p);
  s.keep_local_fits = keep_local_fits;
  return s;
}

UpdatingState ingest_batch(const UpdatingState& state, const BatchData& batch,
                           const huber::HuberConfig& cfg, IngestPolicy policy) {
  check_batch(state, batch);
  huber::HuberFit fit;
  try {
    fit = huber::fit_huber(batch.X, batch.y, cfg);
  } catch (const SingularMatrix& e) {
    if (policy == IngestPolicy::kSkipSingular) {
      std::cerr << "ingest_batch: skipping batch " << batch.batch_index << ": "
                << e.what() << "\n";
      UpdatingState next = state;
      ++next.batches_skipped;
      return next;
    }
    throw SingularMatrix("batch " + std::to_string(batch.batch_index) + ": " +
                             e.what(),
                         e.pivot_index);
  } catch (const DegenerateScale& e) {
    if (policy == IngestPolicy::kSkipSingular) {
      std::cerr << "ingest_batch: skipping batch " << batch.batch_index << ": "
                << e.what() << "\n";
      UpdatingState next = state;
      ++next.batches_skipped;
      return next;
    }
    throw DegenerateScale("batch " + std::to_string(batch.batch_index) + ": " +
                          e.what());
  }

  UpdatingState next = state;
  const Mat G = linalg::gram(batch.X);
  next.U += G;
  next.V += G * fit.coef;
  next.n_total += batch.n();
  next.b_seen += 1;
  if (next.keep_local_fits) next.local_fits.push_back({fit.coef, batch.n()});
  return next;
}

Vec finalize(const UpdatingState& state) {
  if (state.dim() < 1) throw InvalidInput("finalize: empty state");
  return linalg::solve_spd(state.U, state.V);
}

UpdatingState merge(const UpdatingState& a, const UpdatingState& b) {
  if (a.dim() != b.dim()) throw InvalidInput("merge: dimension mismatch");
  UpdatingState out;
  out.U = a.U + b.U;
  out.V = a.V + b.V;
  out.n_total = a.n_total + b.n_total;
  out.b_seen = a.b_seen + b.b_seen;
  out.batches_skipped = a.batches_skipped + b.batches_skipped;
  out.keep_local_fits = a.keep_local_fits || b.keep_local_fits;
  if (out.keep_local_fits) {
    out.local_fits = a.local_fits;
    out.local_fits.insert(out.local_fits.end(), b.local_fits.begin(),
                          b.local_fits.end());
  }
  return out;
}

RlsState rls_new_state(Index p) {
  if (p < 1) throw InvalidInput("rls_new_state: p must be positive");
  RlsState s;
  s.A = Mat::Zero(p, p);
  s.c = Vec::Zero(p);
  return s;
}

RlsState rls_ingest(const RlsState& state, const BatchData& batch) {
  if (batch.p() != state.dim())
    throw InvalidInput("rls_ingest: dimension mismatch at batch " +
                       std::to_string(batch.batch_index));
  if (batch.y.size() != batch.n())
    throw InvalidInput("rls_ingest: X and y sizes disagree at batch " +
                       std::to_string(batch.batch_index));
  RlsState next = state;
  next.A += linalg::gram(batch.X);
  next.c += batch.X.transpose() * batch.y;
  next.n_total += batch.n();
  return next;
}

Vec rls_finalize(const RlsState& state) {
  if (state.dim() < 1) throw InvalidInput("rls_finalize: empty state");
  return linalg::solve_spd(state.A, state.c);
}

Vec dc_aggregate(const std::vector<LocalFit>& fits) {
  if (fits.empty()) throw InvalidInput("dc_aggregate: no local fits");
  const Index p = fits.front().coef.size();
  double n_total = 0;
  for (const auto& f : fits) {
    if (f.coef.size() != p)
      throw InvalidInput("dc_aggregate: coefficient lengths disagree");
    if (f.n < 1) throw InvalidInput("dc_aggregate: non-positive batch size");
    n_total += static_cast<double>(f.n);
  }
  Vec out = Vec::Zero(p);
  for (const auto& f : fits)
    out += (static_cast<double>(f.n) / n_total) * f.coef;
  return out;
}

namespace {
constexpr const char* kSnapshotFormat = "uhr-updating-state";
constexpr int kSnapshotVersion = 1;
}  // namespace

nlohmann::json to_snapshot_json(const UpdatingState& state) {
  const Index p = state.dim();
  nlohmann::json j;
  j["format"] = kSnapshotFormat;
  j["version"] = kSnapshotVersion;
  j["p"] = p;
  j["n_total"] = state.n_total;
  j["b_seen"] = state.b_seen;
  std::vector<double> u;
  u.reserve(static_cast<size_t>(p) * p);
  for (Index i = 0; i < p; ++i)
    for (Index k = 0; k < p; ++k) u.push_back(state.U(i, k));
  j["U"] = u;
  j["V"] = std::vector<double>(state.V.data(), state.V.data() + p);
  if (state.keep_local_fits) {
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : state.local_fits) {
      nlohmann::json jf;
      jf["n"] = f.n;
      jf["coef"] = std::vector<double>(f.coef.data(), f.coef.data() + p);
      fits.push_back(std::move(jf));
    }
    j["local_fits"] = std::move(fits);
  }
  return j;
}

UpdatingState from_snapshot_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kSnapshotFormat)
      throw SchemaError("snapshot: unrecognized format field");
    if (j.at("version").get<int>() != kSnapshotVersion)
      throw SchemaError("snapshot: unsupported version");
    const Index p = j.at("p").get<Index>();
    if (p < 1) throw SchemaError("snapshot: p must be positive");
    UpdatingState s = new_state(p);
    s.n_total = j.at("n_total").get<long>();
    s.b_seen = j.at("b_seen").get<long>();
    const auto u = j.at("U").get<std::vector<double>>();
    const auto v = j.at("V").get<std::vector<double>>();
    if (u.size() != static_cast<size_t>(p) * static_cast<size_t>(p) ||
        v.size() != static_cast<size_t>(p))
      throw SchemaError("snapshot: U or V has the wrong length");
    for (Index i = 0; i < p; ++i)
      for (Index k = 0; k < p; ++k)
        s.U(i, k) = u[static_cast<size_t>(i * p + k)];
    for (Index i = 0; i < p; ++i) s.V[i] = v[static_cast<size_t>(i)];
    if (j.contains("local_fits")) {
      s.keep_local_fits = true;
      for (const auto& jf : j.at("local_fits")) {
        LocalFit f;
        f.n = jf.at("n").get<Index>();
        const auto coef = jf.at("coef").get<std::vector<double>>();
        if (coef.size() != static_cast<size_t>(p))
          throw SchemaError("snapshot: local fit coef has the wrong length");
        f.coef = Eigen::Map<const Vec>(coef.data(), p);
        s.local_fits.push_back(std::move(f));
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("snapshot: ") + e.what());
  }
}

void save_snapshot(const std::string& path, const UpdatingState& state) {
  std::ofstream out(path);
  if (!out) throw IoError("save_snapshot: cannot open " + path);
  out << to_snapshot_json(state).dump(2) << "\n";
  if (!out) throw IoError("save_snapshot: write failed for " + path);
}

UpdatingState load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_snapshot: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("load_snapshot: ") + e.what());
  }
  return from_snapshot_json(j);
}

}  // namespace uhr::streaming
