#pragma once

#include <cstdint>

#include "json.hpp"
#include "uhr/rng.hpp"
#include "uhr/streaming.hpp"
#include "uhr/types.hpp"

namespace uhr::simgen {

// Error distributions for the synthetic designs. Numbering is part of the
// public interface (config files refer to cases by number).
enum class ErrorCase : int {
  kNormal = 1,           // N(0, 1)
  kStudentT3 = 2,        // t with 3 degrees of freedom
  kT3Shifted = 3,        // t(3), then 15% of responses get +20 added
  kMixture = 4,          // 0.85 N(0,1) + 0.15 N(0,8), second variance 8
  kShiftedMixture = 5,   // 0.85 N(0,1) + 0.15 N(4,8)
  kCauchy = 6,           // standard Cauchy
};

ErrorCase error_case_from_int(int c);

struct SimSpec {
  Vec theta0 = default_theta0();
  Index n_t = 100;                   // rows per batch
  long b = 100;                      // number of batches
  ErrorCase error_case = ErrorCase::kNormal;
  bool heteroscedastic = false;      // error scaled by the sum of covariates
  std::uint64_t seed = 0;

  Index p() const { return theta0.size(); }
  long total_n() const { return static_cast<long>(n_t) * b; }

  static Vec default_theta0();
};

nlohmann::json to_json(const SimSpec& spec);
SimSpec sim_spec_from_json(const nlohmann::json& j);

// Independent standard normal covariates, row by row.
Mat gen_covariates(Index n, Index p, rng::Philox4x32& g);

// Raw error draws for a case. Case 3 draws here are plain t(3); the response
// shift happens in gen_batch after the noise is applied.
Vec gen_error(ErrorCase c, Index n, rng::Philox4x32& g);

// Batch t (1-based) of the stream for one replication. Uses the generator
// stream (seed, replication, t), so batches can be produced in any order or
// in parallel and still match a serial pass. Draw order within the stream:
// covariates row-major, then errors, then (case 3 only) the shifted row
// indices, floor(0.15 n) of them chosen uniformly without replacement.
streaming::BatchData gen_batch(const SimSpec& spec, std::uint64_t replication,
                               long t);

}  // namespace uhr::simgen
