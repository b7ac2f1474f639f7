#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "uhr/simgen.hpp"

using uhr::Index;
using uhr::Mat;
using uhr::Vec;
namespace simgen = uhr::simgen;

namespace {

simgen::SimSpec spec_for(simgen::ErrorCase c, Index n_t, bool hetero = false,
                         std::uint64_t seed = 3) {
  simgen::SimSpec s;
  s.error_case = c;
  s.n_t = n_t;
  s.b = 1;
  s.heteroscedastic = hetero;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("batches are pure functions of seed, replication and position") {
  auto spec = spec_for(simgen::ErrorCase::kMixture, 500);
  spec.b = 10;
  const auto a = simgen::gen_batch(spec, 2, 7);
  const auto b = simgen::gen_batch(spec, 2, 7);
  CHECK((a.X - b.X).norm() == 0.0);
  CHECK((a.y - b.y).norm() == 0.0);
  CHECK(a.batch_index == 7);
  CHECK(a.n() == 500);
  CHECK(a.p() == 4);

  const auto other_rep = simgen::gen_batch(spec, 3, 7);
  const auto other_t = simgen::gen_batch(spec, 2, 8);
  CHECK((a.y - other_rep.y).norm() > 0.0);
  CHECK((a.y - other_t.y).norm() > 0.0);
}

TEST_CASE("the draw order is covariates, then errors") {
  // Reconstruct a normal-error batch from the raw generator stream.
  auto spec = spec_for(simgen::ErrorCase::kNormal, 50, false, 17);
  spec.b = 9;
  const auto batch = simgen::gen_batch(spec, 4, 9);
  uhr::rng::Philox4x32 g(17, 4, 9);
  Mat X(50, 4);
  for (Index i = 0; i < 50; ++i)
    for (Index j = 0; j < 4; ++j) X(i, j) = g.gaussian();
  Vec eps(50);
  for (Index i = 0; i < 50; ++i) eps[i] = g.gaussian();
  CHECK((batch.X - X).norm() == 0.0);
  const Vec y = X * spec.theta0 + eps;
  CHECK((batch.y - y).norm() == 0.0);
}

TEST_CASE("normal errors have unit variance and centered mean") {
  const auto b = simgen::gen_batch(spec_for(simgen::ErrorCase::kNormal, 200000), 1, 1);
  const Vec eps = b.y - b.X * simgen::SimSpec::default_theta0();
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.02).scale(1.0));
  CHECK(eps.squaredNorm() / 200000.0 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("heavy-tailed errors have variance three") {
  const auto b =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kStudentT3, 400000), 1, 1);
  const Vec eps = b.y - b.X * simgen::SimSpec::default_theta0();
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.05).scale(1.0));
  CHECK(eps.squaredNorm() / 400000.0 == doctest::Approx(3.0).epsilon(0.2));
}

TEST_CASE("the shifted case moves exactly the advertised rows by twenty") {
  const Index n = 2000;
  const auto plain =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kStudentT3, n), 1, 1);
  const auto shifted =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kT3Shifted, n), 1, 1);
  CHECK((plain.X - shifted.X).norm() == 0.0);
  Index moved = 0;
  for (Index i = 0; i < n; ++i) {
    const double d = shifted.y[i] - plain.y[i];
    if (d != 0.0) {
      CHECK(d == doctest::Approx(20.0).epsilon(1e-9));
      ++moved;
    }
  }
  CHECK(moved == static_cast<Index>(0.15 * static_cast<double>(n)));
}

TEST_CASE("shifted-case contamination count uses the floor") {
  const auto a =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kT3Shifted, 107), 1, 1);
  const auto b =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kStudentT3, 107), 1, 1);
  Index moved = 0;
  for (Index i = 0; i < 107; ++i)
    if (a.y[i] != b.y[i]) ++moved;
  CHECK(moved == 16);  // floor(0.15 * 107)
}

TEST_CASE("mixture errors have the blended variance") {
  const auto b =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kMixture, 400000), 1, 1);
  const Vec eps = b.y - b.X * simgen::SimSpec::default_theta0();
  // 0.85 * 1 + 0.15 * 8
  CHECK(eps.squaredNorm() / 400000.0 == doctest::Approx(2.05).epsilon(0.05));
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.05).scale(1.0));
}

TEST_CASE("shifted mixture errors have the blended mean and second moment") {
  const auto b = simgen::gen_batch(
      spec_for(simgen::ErrorCase::kShiftedMixture, 400000), 1, 1);
  const Vec eps = b.y - b.X * simgen::SimSpec::default_theta0();
  CHECK(eps.mean() == doctest::Approx(0.6).epsilon(0.05));
  // 0.85 * 1 + 0.15 * (16 + 8)
  CHECK(eps.squaredNorm() / 400000.0 == doctest::Approx(4.45).epsilon(0.05));
}

TEST_CASE("cauchy errors have the right quartiles") {
  const auto b =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kCauchy, 200000), 1, 1);
  const Vec eps = b.y - b.X * simgen::SimSpec::default_theta0();
  Index below_m1 = 0, below_0 = 0, below_p1 = 0;
  for (Index i = 0; i < eps.size(); ++i) {
    below_m1 += eps[i] < -1.0;
    below_0 += eps[i] < 0.0;
    below_p1 += eps[i] < 1.0;
  }
  const double n = static_cast<double>(eps.size());
  CHECK(below_m1 / n == doctest::Approx(0.25).epsilon(0.03));
  CHECK(below_0 / n == doctest::Approx(0.50).epsilon(0.02));
  CHECK(below_p1 / n == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("heteroscedastic errors scale with the covariate sum") {
  const auto homo =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kNormal, 1000), 1, 1);
  const auto hetero =
      simgen::gen_batch(spec_for(simgen::ErrorCase::kNormal, 1000, true), 1, 1);
  CHECK((homo.X - hetero.X).norm() == 0.0);
  const Vec theta = simgen::SimSpec::default_theta0();
  const Vec eps = homo.y - homo.X * theta;
  const Vec expected = hetero.X * theta +
                       (hetero.X.rowwise().sum().array() * eps.array()).matrix();
  CHECK((hetero.y - expected).norm() <= 1e-10 * (1.0 + expected.norm()));
}

TEST_CASE("the stream design serializes and back") {
  simgen::SimSpec s;
  s.n_t = 250;
  s.b = 40;
  s.error_case = simgen::ErrorCase::kShiftedMixture;
  s.heteroscedastic = true;
  s.seed = 99;
  Vec t(3);
  t << 4, 5, 6;
  s.theta0 = t;
  const auto back = simgen::sim_spec_from_json(simgen::to_json(s));
  CHECK(back.n_t == 250);
  CHECK(back.b == 40);
  CHECK(back.error_case == simgen::ErrorCase::kShiftedMixture);
  CHECK(back.heteroscedastic);
  CHECK(back.seed == 99);
  CHECK((back.theta0 - t).norm() == 0.0);
}

TEST_CASE("unknown case numbers are rejected") {
  CHECK_THROWS_AS(simgen::error_case_from_int(0), uhr::InvalidInput);
  CHECK_THROWS_AS(simgen::error_case_from_int(7), uhr::InvalidInput);
  CHECK(simgen::error_case_from_int(6) == simgen::ErrorCase::kCauchy);
}
