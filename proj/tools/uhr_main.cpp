#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uhr/bench.hpp"
#include "uhr/csv_stream.hpp"
#include "uhr/errors.hpp"
#include "uhr/huber.hpp"
#include "uhr/inference.hpp"
#include "uhr/simgen.hpp"
#include "uhr/streaming.hpp"

namespace {

using uhr::Index;
using uhr::Mat;
using uhr::Vec;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uhr::IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw uhr::SchemaError(path + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw uhr::IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw uhr::IoError("write failed: " + path);
}

struct HuberFlags {
  double k = 1.345;
  std::string k_policy = "scaled";
  int max_iter = 1000;
  double rel_tol = 1e-8;

  void attach(CLI::App* cmd) {
    cmd->add_option("--k", k, "threshold, or its multiple of the scale");
    cmd->add_option("--k-policy", k_policy,
                    "fixed: k in response units; scaled: k times the spread")
        ->check(CLI::IsMember({"fixed", "scaled"}));
    cmd->add_option("--max-iter", max_iter, "reweighting iteration cap")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--rel-tol", rel_tol, "coefficient convergence tolerance");
  }

  uhr::huber::HuberConfig config() const {
    uhr::huber::HuberConfig cfg;
    if (k_policy == "fixed") cfg = uhr::huber::HuberConfig::fixed_k(k, 1.0);
    cfg.k = k;
    cfg.max_iter = max_iter;
    cfg.rel_tol = rel_tol;
    return cfg;
  }
};

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string spec_path;
  std::string out_path;
  std::uint64_t replication = 1;
};

int run_simulate(const SimulateArgs& args) {
  const auto spec = uhr::simgen::sim_spec_from_json(read_json_file(args.spec_path));
  std::ofstream out(args.out_path);
  if (!out) throw uhr::IoError("cannot open " + args.out_path + " for writing");
  out << 'y';
  for (Index j = 0; j < spec.p(); ++j) out << ",x" << (j + 1);
  out << '\n';
  char buf[32];
  long rows = 0;
  for (long t = 1; t <= spec.b; ++t) {
    const auto batch = uhr::simgen::gen_batch(spec, args.replication, t);
    for (Index i = 0; i < batch.n(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", batch.y[i]);
      out << buf;
      for (Index j = 0; j < batch.p(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", batch.X(i, j));
        out << ',' << buf;
      }
      out << '\n';
      ++rows;
    }
  }
  if (!out) throw uhr::IoError("write failed: " + args.out_path);
  std::cout << "wrote " << rows << " rows in " << spec.b << " batches to "
            << args.out_path << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string input;
  std::string schema_path;
  std::string estimator = "uhr";
  Index batch_size = 1000;
  std::string report_path;
  int bootstrap = 0;
  std::uint64_t bootstrap_seed = 1;
  double test_split = 0;
  std::string test_file;
  bool exact_moments = false;
  bool compute_min_shift = false;
  bool strict = false;
  bool skip_singular = false;
  int threads = 0;
  HuberFlags huber;
};

long count_accepted(const std::string& path, const uhr::io::StreamSchema& schema,
                    bool strict) {
  uhr::io::CsvBatchReader reader(path, schema, 65536, strict);
  while (reader.next()) {
  }
  return reader.rows_accepted();
}

Vec collect_residuals(const std::string& path,
                      const uhr::io::StreamSchema& schema, Index batch_size,
                      bool strict, long limit, const Vec& coef) {
  uhr::io::CsvBatchReader reader(path, schema, batch_size, strict);
  if (limit > 0) reader.limit_accepted(limit);
  std::vector<double> r;
  while (auto batch = reader.next()) {
    const Vec res = batch->y - batch->X * coef;
    r.insert(r.end(), res.data(), res.data() + res.size());
  }
  return Eigen::Map<const Vec>(r.data(), static_cast<Index>(r.size()));
}

int run_fit(const FitArgs& args) {
  const auto t_start = std::chrono::steady_clock::now();
  auto schema = uhr::io::load_schema(args.schema_path);
  const auto cfg = args.huber.config();
  const bool huber_family = args.estimator == "uhr" ||
                            args.estimator == "ohr" ||
                            args.estimator == "dchr";
  if (args.bootstrap > 0 && args.estimator != "uhr")
    throw uhr::InvalidInput("--bootstrap is only available with --estimator uhr");

  std::optional<double> min_shift;
  if (args.compute_min_shift) {
    min_shift = uhr::io::scan_column_min(args.input, schema.response.column);
    schema.response.log_shift_min = *min_shift;
  }

  // Train rows are the file prefix; --test-split holds out the tail.
  long train_limit = 0;
  long n_total = -1;
  if (args.test_split > 0) {
    n_total = count_accepted(args.input, schema, args.strict);
    const long n_test = static_cast<long>(args.test_split * static_cast<double>(n_total));
    train_limit = n_total - n_test;
    if (train_limit <= schema.p())
      throw uhr::InvalidInput("fit: test split leaves too few training rows");
    if (n_test < 1) throw uhr::InvalidInput("fit: test split holds out nothing");
  }

  const auto policy = args.skip_singular
                          ? uhr::streaming::IngestPolicy::kSkipSingular
                          : uhr::streaming::IngestPolicy::kStrict;

  uhr::io::CsvBatchReader reader(args.input, schema, args.batch_size,
                                 args.strict);
  if (train_limit > 0) reader.limit_accepted(train_limit);

  const auto t_fit = std::chrono::steady_clock::now();
  auto rls = uhr::streaming::rls_new_state(schema.p());
  auto ustate = uhr::streaming::new_state(schema.p());
  std::vector<uhr::streaming::LocalFit> local_fits;
  std::vector<uhr::streaming::BatchData> pooled;
  std::optional<uhr::streaming::BatchData> last_batch;
  long b_used = 0;

  while (auto batch = reader.next()) {
    rls = uhr::streaming::rls_ingest(rls, *batch);
    if (args.estimator == "uhr") {
      ustate = uhr::streaming::ingest_batch(ustate, *batch, cfg, policy);
    } else if (args.estimator == "dchr") {
      const auto fit = uhr::huber::fit_huber(batch->X, batch->y, cfg);
      local_fits.push_back({fit.coef, fit.n_obs});
    } else if (args.estimator == "ohr") {
      pooled.push_back(*batch);
    }
    last_batch = std::move(*batch);
    ++b_used;
  }
  if (b_used == 0) throw uhr::InvalidInput("fit: no usable rows in " + args.input);

  Vec coef;
  if (args.estimator == "uhr") {
    coef = uhr::streaming::finalize(ustate);
  } else if (args.estimator == "ols" || args.estimator == "rls") {
    coef = uhr::streaming::rls_finalize(rls);
  } else if (args.estimator == "dchr") {
    coef = uhr::streaming::dc_aggregate(local_fits);
  } else {
    Mat X(rls.n_total, schema.p());
    Vec y(rls.n_total);
    Index at = 0;
    for (const auto& b : pooled) {
      X.middleRows(at, b.n()) = b.X;
      y.segment(at, b.n()) = b.y;
      at += b.n();
    }
    coef = uhr::huber::fit_huber(X, y, cfg).coef;
  }
  const double fit_seconds = seconds_since(t_fit);

  // Plug-in covariance. Moment residuals come from the last batch unless
  // --exact-moments re-reads the training rows.
  Vec residuals;
  if (args.exact_moments)
    residuals = collect_residuals(args.input, schema, args.batch_size,
                                  args.strict, train_limit, coef);
  else
    residuals = last_batch->y - last_batch->X * coef;
  const double k_mom =
      huber_family ? uhr::inference::resolve_moment_k(residuals, cfg)
                   : std::numeric_limits<double>::infinity();
  const auto moments = uhr::inference::psi_moments(residuals, k_mom);
  uhr::streaming::UpdatingState cov_state;
  if (args.estimator == "uhr") {
    cov_state = ustate;
  } else {
    cov_state = uhr::streaming::new_state(schema.p());
    cov_state.U = rls.A;
    cov_state.V = rls.A * coef;  // finalizes back to coef
    cov_state.n_total = rls.n_total;
  }
  const auto cov = uhr::inference::uhr_covariance(cov_state, moments);

  nlohmann::json report;
  report["estimator"] = args.estimator;
  report["input"] = args.input;
  report["batch_size"] = args.batch_size;
  report["coef"] = to_std(coef);
  report["se"] = to_std(cov.se);
  report["t_values"] = to_std(cov.t_values);
  report["moments"] = {{"k", k_mom},
                       {"e_psi2", moments.e_psi2},
                       {"e_dpsi", moments.e_dpsi},
                       {"n_used", moments.n_used},
                       {"exact", args.exact_moments}};
  report["n_train"] = reader.rows_accepted();
  report["b_used"] = b_used;
  report["rows_skipped"] = reader.rows_skipped();
  if (min_shift) report["min_shift"] = *min_shift;

  if (args.bootstrap > 0) {
    const std::string input = args.input;
    const auto schema_copy = schema;
    const Index bs = args.batch_size;
    const bool strict = args.strict;
    const long limit = train_limit;
    const uhr::inference::ReplayableStream replay =
        [input, schema_copy, bs, strict, limit]() -> uhr::inference::BatchStream {
      auto r = std::make_shared<uhr::io::CsvBatchReader>(input, schema_copy,
                                                         bs, strict);
      if (limit > 0) r->limit_accepted(limit);
      return [r]() { return r->next(); };
    };
    const Vec boot = uhr::inference::bootstrap_se(
        replay, cfg, args.bootstrap, args.bootstrap_seed, args.threads);
    report["bootstrap_se"] = to_std(boot);
    report["bootstrap_replicates"] = args.bootstrap;
  }

  if (args.test_split > 0 || !args.test_file.empty()) {
    double sq = 0, ab = 0;
    long n_test = 0;
    std::unique_ptr<uhr::io::CsvBatchReader> test;
    if (args.test_split > 0) {
      test = std::make_unique<uhr::io::CsvBatchReader>(
          args.input, schema, args.batch_size, args.strict);
      test->skip_accepted(train_limit);
    } else {
      test = std::make_unique<uhr::io::CsvBatchReader>(
          args.test_file, schema, args.batch_size, args.strict);
    }
    while (auto batch = test->next()) {
      const Vec d = uhr::io::predict(coef, batch->X) - batch->y;
      sq += d.squaredNorm();
      ab += d.cwiseAbs().sum();
      n_test += batch->n();
    }
    if (n_test == 0) throw uhr::InvalidInput("fit: empty test set");
    report["oos"] = {{"mse", sq / static_cast<double>(n_test)},
                     {"mae", ab / static_cast<double>(n_test)},
                     {"n_test", n_test}};
  }

  report["timing"] = {{"fit_seconds", fit_seconds},
                      {"total_seconds", seconds_since(t_start)}};

  const std::string text = report.dump(2) + "\n";
  if (args.report_path.empty())
    std::cout << text;
  else
    write_text_file(args.report_path, text);
  if (!args.report_path.empty()) {
    std::cout << args.estimator << " fit: " << reader.rows_accepted()
              << " rows, " << b_used << " batches";
    std::cout << ", coef =";
    for (Index j = 0; j < coef.size(); ++j) std::cout << ' ' << coef[j];
    std::cout << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- bench

struct BenchArgs {
  std::string spec_path;
  std::string out_path;
  std::string format = "csv";
  std::string figure_series;
  bool raw_units = false;
  int threads = -1;
};

int run_bench(const BenchArgs& args) {
  auto spec = uhr::bench::experiment_from_json(read_json_file(args.spec_path));
  uhr::bench::apply_preset(spec);
  if (args.threads >= 0) spec.n_threads = args.threads;
  if (spec.grid.empty() || spec.cases.empty() || spec.estimators.empty())
    throw uhr::InvalidInput("bench: experiment needs grid, cases, estimators");
  const auto rows = uhr::bench::run_experiment(spec);
  std::string text;
  if (args.figure_series.empty()) {
    text = uhr::bench::emit_results(
        rows, spec, uhr::bench::format_from_name(args.format),
        !args.raw_units);
  } else {
    const auto comma = args.figure_series.find(',');
    if (comma == std::string::npos)
      throw uhr::InvalidInput("--figure-series wants x,y like b,mse or n,time");
    const std::string xs = args.figure_series.substr(0, comma);
    const std::string ys = args.figure_series.substr(comma + 1);
    uhr::bench::SeriesX x;
    if (xs == "b")
      x = uhr::bench::SeriesX::kB;
    else if (xs == "n")
      x = uhr::bench::SeriesX::kN;
    else
      throw uhr::InvalidInput("--figure-series x must be b or n");
    uhr::bench::SeriesY y;
    if (ys == "mse")
      y = uhr::bench::SeriesY::kMse;
    else if (ys == "time")
      y = uhr::bench::SeriesY::kTime;
    else
      throw uhr::InvalidInput("--figure-series y must be mse or time");
    text = uhr::bench::emit_figure_series(rows, x, y, !args.raw_units);
  }
  if (args.out_path.empty())
    std::cout << text;
  else {
    write_text_file(args.out_path, text);
    std::cout << "wrote " << rows.size() << " result rows to " << args.out_path
              << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- state

struct StateArgs {
  std::string input;
  std::string schema_path;
  std::string snapshot;
  std::string snapshot_out;
  std::string report_path;
  Index batch_size = 1000;
  long batches = 0;  // 0: consume the whole stream
  bool strict = false;
  bool skip_singular = false;
  HuberFlags huber;
};

int run_state(const StateArgs& args, bool resume) {
  const auto schema = uhr::io::load_schema(args.schema_path);
  const auto cfg = args.huber.config();
  const auto policy = args.skip_singular
                          ? uhr::streaming::IngestPolicy::kSkipSingular
                          : uhr::streaming::IngestPolicy::kStrict;
  auto state = resume ? uhr::streaming::load_snapshot(args.snapshot)
                      : uhr::streaming::new_state(schema.p());
  if (resume && state.dim() != schema.p())
    throw uhr::SchemaError("state resume: snapshot was built for p=" +
                           std::to_string(state.dim()) + ", schema has p=" +
                           std::to_string(schema.p()));

  uhr::io::CsvBatchReader reader(args.input, schema, args.batch_size,
                                 args.strict);
  if (resume && state.n_total > 0) reader.skip_accepted(state.n_total);
  long ingested = 0;
  while (args.batches == 0 || ingested < args.batches) {
    auto batch = reader.next();
    if (!batch) break;
    state = uhr::streaming::ingest_batch(state, *batch, cfg, policy);
    ++ingested;
  }

  const std::string out_snapshot =
      !args.snapshot_out.empty() ? args.snapshot_out
      : resume                   ? std::string()
                                 : args.snapshot;
  if (!out_snapshot.empty()) uhr::streaming::save_snapshot(out_snapshot, state);

  if (!args.report_path.empty() || resume) {
    nlohmann::json report;
    report["coef"] = to_std(uhr::streaming::finalize(state));
    report["n_total"] = state.n_total;
    report["b_seen"] = state.b_seen;
    report["batches_skipped"] = state.batches_skipped;
    report["rows_skipped"] = reader.rows_skipped();
    const std::string text = report.dump(2) + "\n";
    if (args.report_path.empty())
      std::cout << text;
    else
      write_text_file(args.report_path, text);
  }
  std::cerr << (resume ? "resumed" : "saved") << " state: n_total="
            << state.n_total << " b_seen=" << state.b_seen << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming robust regression over batched data"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand(
      "simulate", "generate a synthetic regression stream as CSV");
  simulate->add_option("--spec", sim.spec_path, "stream design JSON")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out_path, "output CSV path")->required();
  simulate->add_option("--replication", sim.replication,
                       "replication index selecting the draw stream");

  FitArgs fit;
  auto* fitc = app.add_subcommand("fit", "fit one estimator to a CSV stream");
  fitc->add_option("--input", fit.input, "input CSV")->required()
      ->check(CLI::ExistingFile);
  fitc->add_option("--schema", fit.schema_path, "stream schema JSON")
      ->required()
      ->check(CLI::ExistingFile);
  fitc->add_option("--estimator", fit.estimator,
                   "uhr | rls | ols | ohr | dchr")
      ->check(CLI::IsMember({"uhr", "rls", "ols", "ohr", "dchr"}));
  fitc->add_option("--batch-size", fit.batch_size, "rows per batch")
      ->check(CLI::PositiveNumber);
  fitc->add_option("--report", fit.report_path,
                   "write the JSON report here instead of stdout");
  fitc->add_option("--bootstrap", fit.bootstrap,
                   "resampling replicates for standard errors (uhr only)")
      ->check(CLI::NonNegativeNumber);
  fitc->add_option("--bootstrap-seed", fit.bootstrap_seed, "resampling seed");
  auto* split = fitc->add_option(
      "--test-split", fit.test_split,
      "hold out this fraction of accepted rows, taken from the end");
  split->check(CLI::Range(std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0)));
  fitc->add_option("--test-file", fit.test_file,
                   "evaluate on this CSV instead of a split")
      ->check(CLI::ExistingFile)
      ->excludes(split);
  fitc->add_flag("--exact-moments", fit.exact_moments,
                 "second pass over the training rows for the score moments "
                 "(holds all residuals in memory)");
  fitc->add_flag("--compute-min-shift", fit.compute_min_shift,
                 "scan the response column minimum and use it as the log "
                 "transform shift");
  fitc->add_flag("--strict", fit.strict,
                 "malformed rows are errors instead of skips");
  fitc->add_flag("--skip-singular", fit.skip_singular,
                 "drop numerically bad batches instead of aborting");
  fitc->add_option("--threads", fit.threads, "worker threads (0: auto)")
      ->envname("UHR_THREADS");
  fit.huber.attach(fitc);

  BenchArgs bench;
  auto* benchc =
      app.add_subcommand("bench", "run a simulation study and tabulate it");
  benchc->add_option("--spec", bench.spec_path, "experiment JSON")
      ->required()
      ->check(CLI::ExistingFile);
  benchc->add_option("--out", bench.out_path, "output path (default stdout)");
  benchc->add_option("--format", bench.format, "csv | json | markdown")
      ->check(CLI::IsMember({"csv", "json", "markdown"}));
  benchc->add_option("--figure-series", bench.figure_series,
                     "emit a long-format plotting series instead: x,y with "
                     "x in {b,n} and y in {mse,time}");
  benchc->add_flag("--raw-units", bench.raw_units,
                   "report mse/mae unscaled instead of the 1e4/1e2 table "
                   "units");
  benchc->add_option("--threads", bench.threads, "worker threads (0: auto)")
      ->envname("UHR_THREADS");

  StateArgs st;
  auto* statec = app.add_subcommand(
      "state", "persist or continue an updating-estimator pass");
  statec->require_subcommand(1);
  auto* save = statec->add_subcommand(
      "save", "ingest a stream prefix and write the summaries");
  auto* resume = statec->add_subcommand(
      "resume", "load summaries, skip what they cover, ingest the rest");
  for (auto* cmd : {save, resume}) {
    cmd->add_option("--input", st.input, "input CSV")->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--schema", st.schema_path, "stream schema JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--batch-size", st.batch_size, "rows per batch")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--batches", st.batches,
                    "stop after this many new batches (0: all)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--report", st.report_path, "write a coefficient report");
    cmd->add_flag("--strict", st.strict,
                  "malformed rows are errors instead of skips");
    cmd->add_flag("--skip-singular", st.skip_singular,
                  "drop numerically bad batches instead of aborting");
    st.huber.attach(cmd);
  }
  save->add_option("--snapshot", st.snapshot, "snapshot JSON to write")
      ->required();
  resume->add_option("--snapshot", st.snapshot, "snapshot JSON to load")
      ->required()
      ->check(CLI::ExistingFile);
  resume->add_option("--snapshot-out", st.snapshot_out,
                     "write the extended snapshot here");

  try {
    app.parse(argc, argv);
    if (*simulate) return run_simulate(sim);
    if (*fitc) return run_fit(fit);
    if (*benchc) return run_bench(bench);
    if (*save) return run_state(st, false);
    if (*resume) return run_state(st, true);
    return 0;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const uhr::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const uhr::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const uhr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const uhr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
