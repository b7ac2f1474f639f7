#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "uhr/huber.hpp"
#include "uhr/simgen.hpp"
#include "uhr/types.hpp"

namespace uhr::bench {

enum class Estimator { kOls, kRls, kOhr, kDchr, kUhr };

std::string estimator_name(Estimator e);
Estimator estimator_from_name(const std::string& name);

struct CaseSetting {
  simgen::ErrorCase error_case = simgen::ErrorCase::kNormal;
  bool heteroscedastic = false;
};

struct GridPoint {
  long total_n = 0;  // n_t * b
  Index n_t = 0;
  long b = 0;
};

// How a replication is executed.
//   kFinalFit: every estimator produces one estimate from the full stream;
//     pooled methods fit once on all rows. This is what the accuracy studies
//     use.
//   kOnlineRefit: the stream is consumed batch by batch and every estimator
//     must be able to report after each batch. Streaming methods update
//     incrementally; pooled methods refit on the prefix seen so far, which
//     is where their quadratic total cost shows up. Reported estimates and
//     errors are still the final ones; only the timing differs.
enum class TimingProtocol { kFinalFit, kOnlineRefit };

struct ExperimentSpec {
  std::string which = "custom";  // custom | e1 | e2 | e3 | e4
  std::vector<GridPoint> grid;
  std::vector<CaseSetting> cases;
  std::vector<Estimator> estimators;
  int reps = 200;
  std::uint64_t base_seed = 0;
  Vec theta0 = simgen::SimSpec::default_theta0();
  huber::HuberConfig huber_cfg;
  TimingProtocol protocol = TimingProtocol::kFinalFit;
  int n_threads = 0;
};

// Fills grid/cases/estimators for the named preset layouts; "custom" leaves
// the spec untouched. Presets cover all six error cases, both variance
// regimes, and all five estimators at the published stream sizes.
void apply_preset(ExperimentSpec& spec);

nlohmann::json to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const nlohmann::json& j);

struct ResultRow {
  GridPoint grid;
  CaseSetting setting;
  Estimator estimator = Estimator::kUhr;
  double mse = 0;        // raw squared-error units
  double mae = 0;        // raw absolute-error units
  double mean_time_s = 0;
  int reps_used = 0;
  int failures = 0;
};

// Mean over estimates of the summed coordinatewise squared (absolute) error.
double mse(const std::vector<Vec>& estimates, const Vec& theta0);
double mae(const std::vector<Vec>& estimates, const Vec& theta0);

// Runs every grid point x case x estimator for spec.reps replications.
// Replication r of cell (gi, ci) draws its stream from a seed derived from
// (base_seed, gi, ci), so results are identical for any worker count. A cell
// where more than 20% of replications fail aborts the run.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

enum class OutputFormat { kCsv, kJson, kMarkdown };
OutputFormat format_from_name(const std::string& name);

// Renders rows with a run-info header. mse/mae are scaled by 1e4 and 1e2
// when table_units is set, printed with five decimals either way.
std::string emit_results(const std::vector<ResultRow>& rows,
                         const ExperimentSpec& spec, OutputFormat format,
                         bool table_units = true);

// Long-format series for plotting: one line per (series, x) pair.
// x_field picks b or total N; y_field picks mse or mean time.
enum class SeriesX { kB, kN };
enum class SeriesY { kMse, kTime };
std::string emit_figure_series(const std::vector<ResultRow>& rows,
                               SeriesX x_field, SeriesY y_field,
                               bool table_units = true);

}  // namespace uhr::bench
