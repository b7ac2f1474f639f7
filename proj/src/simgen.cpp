#include "uhr/simgen.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace uhr::simgen {

ErrorCase error_case_from_int(int c) {
  if (c < 1 || c > 6)
    throw InvalidInput("error_case_from_int: case must be in 1..6, got " +
                       std::to_string(c));
  return static_cast<ErrorCase>(c);
}

Vec SimSpec::default_theta0() {
  Vec t(4);
  t << 1, -1, 2, -2;
  return t;
}

nlohmann::json to_json(const SimSpec& spec) {
  nlohmann::json j;
  j["theta0"] =
      std::vector<double>(spec.theta0.data(), spec.theta0.data() + spec.p());
  j["n_t"] = spec.n_t;
  j["b"] = spec.b;
  j["error_case"] = static_cast<int>(spec.error_case);
  j["heteroscedastic"] = spec.heteroscedastic;
  j["seed"] = spec.seed;
  return j;
}

SimSpec sim_spec_from_json(const nlohmann::json& j) {
  try {
    SimSpec spec;
    if (j.contains("theta0")) {
      const auto t = j.at("theta0").get<std::vector<double>>();
      if (t.empty()) throw SchemaError("sim spec: theta0 must be non-empty");
      spec.theta0 = Eigen::Map<const Vec>(t.data(), static_cast<Index>(t.size()));
    }
    spec.n_t = j.at("n_t").get<Index>();
    spec.b = j.at("b").get<long>();
    spec.error_case = error_case_from_int(j.at("error_case").get<int>());
    spec.heteroscedastic = j.value("heteroscedastic", false);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (spec.n_t < 1 || spec.b < 1)
      throw SchemaError("sim spec: n_t and b must be positive");
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("sim spec: ") + e.what());
  }
}

Mat gen_covariates(Index n, Index p, rng::Philox4x32& g) {
  if (n < 1 || p < 1)
    throw InvalidInput("gen_covariates: n and p must be positive");
  Mat X(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) X(i, j) = g.gaussian();
  return X;
}

Vec gen_error(ErrorCase c, Index n, rng::Philox4x32& g) {
  if (n < 1) throw InvalidInput("gen_error: n must be positive");
  Vec e(n);
  switch (c) {
    case ErrorCase::kNormal:
      for (Index i = 0; i < n; ++i) e[i] = g.gaussian();
      break;
    case ErrorCase::kStudentT3:
    case ErrorCase::kT3Shifted:
      for (Index i = 0; i < n; ++i) e[i] = g.student_t(3);
      break;
    case ErrorCase::kMixture:
      for (Index i = 0; i < n; ++i)
        e[i] = g.uniform01() < 0.85 ? g.gaussian()
                                    : std::sqrt(8.0) * g.gaussian();
      break;
    case ErrorCase::kShiftedMixture:
      for (Index i = 0; i < n; ++i)
        e[i] = g.uniform01() < 0.85 ? g.gaussian()
                                    : 4.0 + std::sqrt(8.0) * g.gaussian();
      break;
    case ErrorCase::kCauchy:
      for (Index i = 0; i < n; ++i) e[i] = g.cauchy();
      break;
  }
  return e;
}

streaming::BatchData gen_batch(const SimSpec& spec, std::uint64_t replication,
                               long t) {
  if (t < 1 || t > spec.b)
    throw InvalidInput("gen_batch: batch index out of range");
  rng::Philox4x32 g(spec.seed, replication, static_cast<std::uint64_t>(t));
  streaming::BatchData batch;
  batch.batch_index = t;
  batch.X = gen_covariates(spec.n_t, spec.p(), g);
  const Vec eps = gen_error(spec.error_case, spec.n_t, g);
  batch.y = batch.X * spec.theta0;
  if (spec.heteroscedastic)
    batch.y += batch.X.rowwise().sum().cwiseProduct(eps);
  else
    batch.y += eps;
  if (spec.error_case == ErrorCase::kT3Shifted) {
    const Index m = static_cast<Index>(0.15 * static_cast<double>(spec.n_t));
    // Partial Fisher-Yates picks m distinct rows uniformly.
    std::vector<Index> idx(static_cast<size_t>(spec.n_t));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (Index i = 0; i < m; ++i) {
      const Index j =
          i + static_cast<Index>(g.next_below(
                  static_cast<std::uint64_t>(spec.n_t - i)));
      std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
      batch.y[idx[static_cast<size_t>(i)]] += 20.0;
    }
  }
  return batch;
}

}  // namespace uhr::simgen
