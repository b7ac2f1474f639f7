#include "uhr/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "uhr/linalg.hpp"
#include "uhr/parallel.hpp"
#include "uhr/streaming.hpp"

namespace uhr::bench {

std::string estimator_name(Estimator e) {
  switch (e) {
    case Estimator::kOls:
      return "ols";
    case Estimator::kRls:
      return "rls";
    case Estimator::kOhr:
      return "ohr";
    case Estimator::kDchr:
      return "dchr";
    case Estimator::kUhr:
      return "uhr";
  }
  throw InvalidInput("estimator_name: bad enum value");
}

Estimator estimator_from_name(const std::string& name) {
  if (name == "ols") return Estimator::kOls;
  if (name == "rls") return Estimator::kRls;
  if (name == "ohr") return Estimator::kOhr;
  if (name == "dchr") return Estimator::kDchr;
  if (name == "uhr") return Estimator::kUhr;
  throw InvalidInput("estimator_from_name: unknown estimator '" + name + "'");
}

OutputFormat format_from_name(const std::string& name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  if (name == "markdown") return OutputFormat::kMarkdown;
  throw InvalidInput("format_from_name: unknown format '" + name + "'");
}

namespace {

std::vector<CaseSetting> all_cases() {
  std::vector<CaseSetting> cs;
  for (int c = 1; c <= 6; ++c)
    for (const bool hetero : {false, true})
      cs.push_back({simgen::error_case_from_int(c), hetero});
  return cs;
}

std::vector<Estimator> all_estimators() {
  return {Estimator::kOls, Estimator::kRls, Estimator::kOhr, Estimator::kDchr,
          Estimator::kUhr};
}

GridPoint grid_point(long total_n, Index n_t) {
  if (n_t < 1 || total_n < 1 || total_n % n_t != 0)
    throw InvalidInput("grid point: total N must be a multiple of n_t");
  return {total_n, n_t, total_n / n_t};
}

}  // namespace

void apply_preset(ExperimentSpec& spec) {
  if (spec.which == "custom") return;
  spec.grid.clear();
  if (spec.which == "e1") {
    for (const long b : {100L, 200L, 500L, 1000L})
      spec.grid.push_back(grid_point(1000000L, 1000000L / b));
  } else if (spec.which == "e2") {
    for (const long b : {10L, 100L, 1000L, 10000L})
      spec.grid.push_back(grid_point(100L * b, 100));
  } else if (spec.which == "e3") {
    for (const long n : {250000L, 500000L, 750000L, 1000000L})
      spec.grid.push_back(grid_point(n, 5000));
  } else if (spec.which == "e4") {
    for (long n = 100000L; n <= 800000L; n += 100000L)
      spec.grid.push_back(grid_point(n, 1000));
  } else {
    throw InvalidInput("apply_preset: unknown experiment '" + spec.which +
                       "'");
  }
  if (spec.cases.empty()) spec.cases = all_cases();
  if (spec.estimators.empty()) spec.estimators = all_estimators();
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  j["which"] = spec.which;
  nlohmann::json grid = nlohmann::json::array();
  for (const auto& g : spec.grid)
    grid.push_back({{"N", g.total_n}, {"n_t", g.n_t}, {"b", g.b}});
  j["grid"] = grid;
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : spec.cases)
    cases.push_back({{"error_case", static_cast<int>(c.error_case)},
                     {"heteroscedastic", c.heteroscedastic}});
  j["cases"] = cases;
  std::vector<std::string> est;
  for (const auto e : spec.estimators) est.push_back(estimator_name(e));
  j["estimators"] = est;
  j["reps"] = spec.reps;
  j["base_seed"] = spec.base_seed;
  j["theta0"] =
      std::vector<double>(spec.theta0.data(), spec.theta0.data() + spec.theta0.size());
  j["protocol"] = spec.protocol == TimingProtocol::kOnlineRefit
                      ? "online_refit"
                      : "final_fit";
  j["huber"] = {
      {"k", spec.huber_cfg.k},
      {"k_policy",
       spec.huber_cfg.k_policy == huber::HuberConfig::KPolicy::kFixed
           ? "fixed"
           : "scaled"},
      {"max_iter", spec.huber_cfg.max_iter},
      {"rel_tol", spec.huber_cfg.rel_tol},
      {"scale_policy",
       spec.huber_cfg.scale_policy == huber::HuberConfig::ScalePolicy::kFixed
           ? "fixed"
           : "mad"},
      {"scale", spec.huber_cfg.scale},
  };
  j["n_threads"] = spec.n_threads;
  return j;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  try {
    ExperimentSpec spec;
    spec.which = j.value("which", std::string("custom"));
    if (j.contains("grid")) {
      for (const auto& g : j.at("grid")) {
        const Index n_t = g.at("n_t").get<Index>();
        long total = 0;
        if (g.contains("N"))
          total = g.at("N").get<long>();
        else
          total = static_cast<long>(n_t) * g.at("b").get<long>();
        spec.grid.push_back(grid_point(total, n_t));
      }
    }
    if (j.contains("cases")) {
      if (j.at("cases").is_string() && j.at("cases") == "all") {
        spec.cases = all_cases();
      } else {
        for (const auto& c : j.at("cases"))
          spec.cases.push_back(
              {simgen::error_case_from_int(c.at("error_case").get<int>()),
               c.value("heteroscedastic", false)});
      }
    }
    if (j.contains("estimators"))
      for (const auto& name : j.at("estimators"))
        spec.estimators.push_back(
            estimator_from_name(name.get<std::string>()));
    spec.reps = j.value("reps", 200);
    spec.base_seed = j.value("base_seed", std::uint64_t{0});
    if (j.contains("theta0")) {
      const auto t = j.at("theta0").get<std::vector<double>>();
      if (t.empty()) throw SchemaError("experiment: theta0 must be non-empty");
      spec.theta0 =
          Eigen::Map<const Vec>(t.data(), static_cast<Index>(t.size()));
    }
    if (j.contains("protocol")) {
      const auto p = j.at("protocol").get<std::string>();
      if (p == "final_fit")
        spec.protocol = TimingProtocol::kFinalFit;
      else if (p == "online_refit")
        spec.protocol = TimingProtocol::kOnlineRefit;
      else
        throw SchemaError("experiment: unknown protocol '" + p + "'");
    }
    if (j.contains("huber")) {
      const auto& h = j.at("huber");
      spec.huber_cfg.k = h.value("k", spec.huber_cfg.k);
      spec.huber_cfg.max_iter = h.value("max_iter", spec.huber_cfg.max_iter);
      spec.huber_cfg.rel_tol = h.value("rel_tol", spec.huber_cfg.rel_tol);
      if (h.contains("k_policy")) {
        const auto kp = h.at("k_policy").get<std::string>();
        if (kp == "fixed")
          spec.huber_cfg.k_policy = huber::HuberConfig::KPolicy::kFixed;
        else if (kp == "scaled")
          spec.huber_cfg.k_policy = huber::HuberConfig::KPolicy::kScaled;
        else
          throw SchemaError("experiment: unknown k_policy '" + kp + "'");
      }
      if (h.contains("scale_policy")) {
        const auto sp = h.at("scale_policy").get<std::string>();
        if (sp == "fixed")
          spec.huber_cfg.scale_policy = huber::HuberConfig::ScalePolicy::kFixed;
        else if (sp == "mad")
          spec.huber_cfg.scale_policy =
              huber::HuberConfig::ScalePolicy::kMadReestimated;
        else
          throw SchemaError("experiment: unknown scale_policy '" + sp + "'");
      }
      spec.huber_cfg.scale = h.value("scale", spec.huber_cfg.scale);
    }
    spec.n_threads = j.value("n_threads", 0);
    if (spec.which != "custom") apply_preset(spec);
    if (spec.grid.empty()) throw SchemaError("experiment: empty grid");
    if (spec.cases.empty()) throw SchemaError("experiment: no cases");
    if (spec.estimators.empty())
      throw SchemaError("experiment: no estimators");
    if (spec.reps < 1) throw SchemaError("experiment: reps must be positive");
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("experiment: ") + e.what());
  }
}

double mse(const std::vector<Vec>& estimates, const Vec& theta0) {
  if (estimates.empty()) throw InvalidInput("mse: no estimates");
  double total = 0;
  for (const auto& est : estimates) {
    if (est.size() != theta0.size())
      throw InvalidInput("mse: estimate length mismatch");
    total += (est - theta0).squaredNorm();
  }
  return total / static_cast<double>(estimates.size());
}

double mae(const std::vector<Vec>& estimates, const Vec& theta0) {
  if (estimates.empty()) throw InvalidInput("mae: no estimates");
  double total = 0;
  for (const auto& est : estimates) {
    if (est.size() != theta0.size())
      throw InvalidInput("mae: estimate length mismatch");
    total += (est - theta0).cwiseAbs().sum();
  }
  return total / static_cast<double>(estimates.size());
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct RepOutcome {
  std::vector<std::optional<Vec>> estimate;  // indexed by estimator position
  std::vector<double> time_s;
  std::vector<std::string> error;
};

// One replication of one cell: generate the stream, then run each estimator
// under the requested protocol. Generation and pooled-row assembly happen
// outside the timed regions.
RepOutcome run_replication(const ExperimentSpec& spec, const GridPoint& g,
                           const CaseSetting& cs, std::uint64_t cell_seed,
                           std::uint64_t replication) {
  simgen::SimSpec sim;
  sim.theta0 = spec.theta0;
  sim.n_t = g.n_t;
  sim.b = g.b;
  sim.error_case = cs.error_case;
  sim.heteroscedastic = cs.heteroscedastic;
  sim.seed = cell_seed;

  const Index p = sim.p();
  std::vector<streaming::BatchData> batches;
  batches.reserve(static_cast<size_t>(g.b));
  for (long t = 1; t <= g.b; ++t)
    batches.push_back(simgen::gen_batch(sim, replication, t));

  const bool needs_pooled =
      std::count(spec.estimators.begin(), spec.estimators.end(),
                 Estimator::kOls) ||
      std::count(spec.estimators.begin(), spec.estimators.end(),
                 Estimator::kOhr);
  Mat pooled_X;
  Vec pooled_y;
  if (needs_pooled) {
    pooled_X.resize(g.total_n, p);
    pooled_y.resize(g.total_n);
    Index row = 0;
    for (const auto& batch : batches) {
      pooled_X.middleRows(row, batch.n()) = batch.X;
      pooled_y.segment(row, batch.n()) = batch.y;
      row += batch.n();
    }
  }

  const bool online = spec.protocol == TimingProtocol::kOnlineRefit;
  RepOutcome out;
  out.estimate.resize(spec.estimators.size());
  out.time_s.resize(spec.estimators.size(), 0.0);
  out.error.resize(spec.estimators.size());

  for (size_t ei = 0; ei < spec.estimators.size(); ++ei) {
    const Estimator est = spec.estimators[ei];
    try {
      const auto start = Clock::now();
      Vec coef;
      switch (est) {
        case Estimator::kOls: {
          if (online) {
            Index rows = 0;
            for (const auto& batch : batches) {
              rows += batch.n();
              coef = linalg::solve_spd(
                  linalg::gram(pooled_X.topRows(rows)),
                  Vec(pooled_X.topRows(rows).transpose() *
                      pooled_y.head(rows)));
            }
          } else {
            coef = linalg::solve_spd(
                linalg::gram(pooled_X),
                Vec(pooled_X.transpose() * pooled_y));
          }
          break;
        }
        case Estimator::kRls: {
          auto state = streaming::rls_new_state(p);
          for (const auto& batch : batches) {
            state = streaming::rls_ingest(state, batch);
            if (online) coef = streaming::rls_finalize(state);
          }
          if (!online) coef = streaming::rls_finalize(state);
          break;
        }
        case Estimator::kOhr: {
          if (online) {
            Index rows = 0;
            for (const auto& batch : batches) {
              rows += batch.n();
              coef = huber::fit_huber(Mat(pooled_X.topRows(rows)),
                                      Vec(pooled_y.head(rows)),
                                      spec.huber_cfg)
                         .coef;
            }
          } else {
            coef = huber::fit_huber(pooled_X, pooled_y, spec.huber_cfg).coef;
          }
          break;
        }
        case Estimator::kDchr: {
          std::vector<streaming::LocalFit> fits;
          fits.reserve(batches.size());
          for (const auto& batch : batches) {
            fits.push_back(
                {huber::fit_huber(batch.X, batch.y, spec.huber_cfg).coef,
                 batch.n()});
            if (online) coef = streaming::dc_aggregate(fits);
          }
          if (!online) coef = streaming::dc_aggregate(fits);
          break;
        }
        case Estimator::kUhr: {
          auto state = streaming::new_state(p);
          for (const auto& batch : batches) {
            state = streaming::ingest_batch(state, batch, spec.huber_cfg);
            if (online) coef = streaming::finalize(state);
          }
          if (!online) coef = streaming::finalize(state);
          break;
        }
      }
      out.time_s[ei] = seconds_since(start);
      out.estimate[ei] = std::move(coef);
    } catch (const Error& e) {
      out.error[ei] = e.what();
    }
  }
  return out;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  if (spec.grid.empty() || spec.cases.empty() || spec.estimators.empty())
    throw InvalidInput("run_experiment: empty grid, cases, or estimators");
  if (spec.reps < 1) throw InvalidInput("run_experiment: reps must be >= 1");

  std::vector<ResultRow> rows;
  for (size_t gi = 0; gi < spec.grid.size(); ++gi) {
    for (size_t ci = 0; ci < spec.cases.size(); ++ci) {
      const auto& g = spec.grid[gi];
      const auto& cs = spec.cases[ci];
      // Every cell gets its own stream family so grid points do not share
      // draws.
      const std::uint64_t cell_seed =
          rng::Philox4x32(spec.base_seed, static_cast<std::uint64_t>(gi),
                          static_cast<std::uint64_t>(ci))
              .next_u64();

      std::vector<RepOutcome> outcomes(static_cast<size_t>(spec.reps));
      parallel_for(
          spec.reps,
          [&](long r) {
            outcomes[static_cast<size_t>(r)] = run_replication(
                spec, g, cs, cell_seed, static_cast<std::uint64_t>(r) + 1);
          },
          spec.n_threads);

      for (size_t ei = 0; ei < spec.estimators.size(); ++ei) {
        ResultRow row;
        row.grid = g;
        row.setting = cs;
        row.estimator = spec.estimators[ei];
        std::vector<Vec> estimates;
        estimates.reserve(static_cast<size_t>(spec.reps));
        double time_total = 0;
        for (int r = 0; r < spec.reps; ++r) {
          const auto& oc = outcomes[static_cast<size_t>(r)];
          if (oc.estimate[ei]) {
            estimates.push_back(*oc.estimate[ei]);
            time_total += oc.time_s[ei];
          } else {
            ++row.failures;
          }
        }
        if (row.failures * 5 > spec.reps)
          throw Error("run_experiment: estimator " +
                      estimator_name(row.estimator) + " failed on " +
                      std::to_string(row.failures) + " of " +
                      std::to_string(spec.reps) +
                      " replications (case " +
                      std::to_string(static_cast<int>(cs.error_case)) +
                      ", N=" + std::to_string(g.total_n) + ")");
        row.reps_used = static_cast<int>(estimates.size());
        row.mse = mse(estimates, spec.theta0);
        row.mae = mae(estimates, spec.theta0);
        row.mean_time_s = time_total / std::max(1, row.reps_used);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

namespace {

std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string mse_text(const ResultRow& r, bool table_units) {
  return table_units ? format_double(r.mse * 1e4, "%.5f")
                     : format_double(r.mse, "%.5e");
}

std::string mae_text(const ResultRow& r, bool table_units) {
  return table_units ? format_double(r.mae * 1e2, "%.5f")
                     : format_double(r.mae, "%.5e");
}

std::string run_info_line(const ExperimentSpec& spec, bool table_units) {
  std::ostringstream os;
  os << "experiment=" << spec.which << " reps=" << spec.reps
     << " base_seed=" << spec.base_seed << " protocol="
     << (spec.protocol == TimingProtocol::kOnlineRefit ? "online_refit"
                                                       : "final_fit")
     << " units=" << (table_units ? "mse*1e4,mae*1e2" : "raw");
  return os.str();
}

std::string grid_label(const GridPoint& g) {
  return "N=" + std::to_string(g.total_n) + ",b=" + std::to_string(g.b);
}

}  // namespace

std::string emit_results(const std::vector<ResultRow>& rows,
                         const ExperimentSpec& spec, OutputFormat format,
                         bool table_units) {
  if (format == OutputFormat::kCsv) {
    std::ostringstream os;
    os << "# " << run_info_line(spec, table_units) << "\n";
    os << "N,n_t,b,case,hetero,estimator,mse,mae,mean_time_s,reps_used,"
          "failures\n";
    for (const auto& r : rows) {
      os << r.grid.total_n << ',' << r.grid.n_t << ',' << r.grid.b << ','
         << static_cast<int>(r.setting.error_case) << ','
         << (r.setting.heteroscedastic ? 1 : 0) << ','
         << estimator_name(r.estimator) << ',' << mse_text(r, table_units)
         << ',' << mae_text(r, table_units) << ','
         << format_double(r.mean_time_s, "%.6f") << ',' << r.reps_used << ','
         << r.failures << "\n";
    }
    return os.str();
  }
  if (format == OutputFormat::kJson) {
    nlohmann::json j;
    j["meta"] = {{"run_info", run_info_line(spec, table_units)},
                 {"table_units", table_units}};
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
      out.push_back({{"N", r.grid.total_n},
                     {"n_t", r.grid.n_t},
                     {"b", r.grid.b},
                     {"case", static_cast<int>(r.setting.error_case)},
                     {"hetero", r.setting.heteroscedastic},
                     {"estimator", estimator_name(r.estimator)},
                     {"mse", table_units ? r.mse * 1e4 : r.mse},
                     {"mae", table_units ? r.mae * 1e2 : r.mae},
                     {"mean_time_s", r.mean_time_s},
                     {"reps_used", r.reps_used},
                     {"failures", r.failures}});
    }
    j["rows"] = std::move(out);
    return j.dump(2) + "\n";
  }

  // Markdown: one table per (case, hetero), grid points as columns, one row
  // per metric x estimator.
  std::ostringstream os;
  os << "<!-- " << run_info_line(spec, table_units) << " -->\n";
  std::map<std::pair<int, bool>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows)
    groups[{static_cast<int>(r.setting.error_case),
            r.setting.heteroscedastic}]
        .push_back(&r);
  for (const auto& [key, group] : groups) {
    os << "\n### case " << key.first
       << (key.second ? " (heteroscedastic)" : " (homoscedastic)") << "\n\n";
    std::vector<std::string> labels;
    for (const auto* r : group) {
      const std::string label = grid_label(r->grid);
      if (std::find(labels.begin(), labels.end(), label) == labels.end())
        labels.push_back(label);
    }
    os << "| metric | estimator |";
    for (const auto& l : labels) os << ' ' << l << " |";
    os << "\n|---|---|";
    for (size_t i = 0; i < labels.size(); ++i) os << "---|";
    os << "\n";
    std::vector<Estimator> ests;
    for (const auto* r : group)
      if (std::find(ests.begin(), ests.end(), r->estimator) == ests.end())
        ests.push_back(r->estimator);
    for (const char* metric : {"mse", "mae", "time_s"}) {
      for (const auto est : ests) {
        os << "| " << metric << " | " << estimator_name(est) << " |";
        for (const auto& label : labels) {
          std::string cell = "-";
          for (const auto* r : group) {
            if (r->estimator == est && grid_label(r->grid) == label) {
              if (metric == std::string("mse"))
                cell = mse_text(*r, table_units);
              else if (metric == std::string("mae"))
                cell = mae_text(*r, table_units);
              else
                cell = format_double(r->mean_time_s, "%.6f");
            }
          }
          os << ' ' << cell << " |";
        }
        os << "\n";
      }
    }
  }
  return os.str();
}

std::string emit_figure_series(const std::vector<ResultRow>& rows,
                               SeriesX x_field, SeriesY y_field,
                               bool table_units) {
  std::ostringstream os;
  os << "x,series,y\n";
  for (const auto& r : rows) {
    const long x = x_field == SeriesX::kB ? r.grid.b : r.grid.total_n;
    std::string y;
    if (y_field == SeriesY::kMse)
      y = mse_text(r, table_units);
    else
      y = format_double(r.mean_time_s, "%.6f");
    os << x << ',' << estimator_name(r.estimator) << ',' << y << "\n";
  }
  return os.str();
}

}  // namespace uhr::bench
