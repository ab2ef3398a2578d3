#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "bigsurv/concordance.hpp"
#include "bigsurv/inference.hpp"
#include "bigsurv/newton.hpp"
#include "bigsurv/rng.hpp"
#include "bigsurv/sgd.hpp"
#include "bigsurv/types.hpp"

namespace bigsurv {

/// Generative model: unit-variance uniform covariates, exponential event
/// times with mean exp(-x'beta*), censoring status drawn independently with
/// probability p_c (the recorded time is the drawn event time either way).
struct SimConfig {
  long n = 0;
  int p = 0;
  double censor_prob = 0.2;
  Vector beta_star;  // empty = all ones
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw Error("config", "n must be positive");
    if (p < 1) throw Error("config", "p must be positive");
    if (!(censor_prob >= 0.0 && censor_prob < 1.0))
      throw Error("config", "censoring probability must be in [0,1)");
    if (beta_star.size() != 0 && beta_star.size() != p)
      throw Error("config", "beta_star length must equal p");
  }

  Vector effective_beta_star() const {
    return beta_star.size() ? beta_star : Vector::Ones(p);
  }
};

namespace detail {

/// Covariates and event time only; the caller draws status next so the
/// per-subject draw order is fixed at (p uniforms, time, status).
inline Subject draw_subject(Rng& rng, const Vector& beta_star) {
  static constexpr double kHalfWidth = 1.7320508075688772;  // sqrt(3)
  const int p = static_cast<int>(beta_star.size());
  Subject s;
  s.covariates.resize(p);
  for (int j = 0; j < p; ++j)
    s.covariates[j] = rng.uniform(-kHalfWidth, kHalfWidth);
  const double eta = beta_star.dot(s.covariates);
  s.time = rng.exponential_mean(std::exp(-eta));
  return s;
}

}  // namespace detail

inline Dataset generate(const SimConfig& config) {
  config.validate();
  const Vector beta_star = config.effective_beta_star();
  Rng rng(config.seed);
  std::vector<Subject> subjects;
  subjects.reserve(static_cast<std::size_t>(config.n));
  for (long i = 0; i < config.n; ++i) {
    Subject s = detail::draw_subject(rng, beta_star);
    s.status = rng.bernoulli(1.0 - config.censor_prob) ? 1 : 0;
    subjects.push_back(std::move(s));
  }
  std::vector<std::string> names;
  names.reserve(config.p);
  for (int j = 0; j < config.p; ++j) names.push_back("x" + std::to_string(j + 1));
  return Dataset(std::move(subjects), std::move(names));
}

/// Row-by-row CSV writer producing exactly the same values as generate();
/// memory stays constant in n.
inline void generate_csv(const SimConfig& config, const std::string& path) {
  config.validate();
  const Vector beta_star = config.effective_beta_star();
  Rng rng(config.seed);
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot open '" + path + "' for writing");
  out << "time,status";
  for (int j = 0; j < config.p; ++j) out << ",x" << (j + 1);
  out << "\n";
  char buf[40];
  for (long i = 0; i < config.n; ++i) {
    Subject s = detail::draw_subject(rng, beta_star);
    s.status = rng.bernoulli(1.0 - config.censor_prob) ? 1 : 0;
    std::snprintf(buf, sizeof(buf), "%.17g", s.time);
    out << buf << ',' << s.status;
    for (int j = 0; j < config.p; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.covariates[j]);
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("io", "write failed for '" + path + "'");
}

/// Per-coefficient mean squared error ||est - star||^2 / p.
inline double mse(const Vector& beta_est, const Vector& beta_star) {
  if (beta_est.size() != beta_star.size())
    throw Error("config", "mse: length mismatch");
  return (beta_est - beta_star).squaredNorm() /
         static_cast<double>(beta_est.size());
}

struct ExperimentRow {
  std::string method;
  long n = 0;
  int p = 0;
  int s = 0;
  int replicate = 0;
  double mse = 0.0;
  double concordance = 0.0;
  double seconds = 0.0;
  std::vector<int> covered;  // per-coefficient CI coverage (CI methods only)
  bool failed = false;
  std::string error;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;

  /// Long format: method,n,p,s,replicate,metric,value.
  void write_csv(std::ostream& out) const {
    out << "method,n,p,s,replicate,metric,value\n";
    char buf[40];
    auto emit = [&](const ExperimentRow& r, const std::string& metric,
                    double value) {
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      out << r.method << ',' << r.n << ',' << r.p << ',' << r.s << ','
          << r.replicate << ',' << metric << ',' << buf << "\n";
    };
    for (const auto& r : rows) {
      emit(r, "failed", r.failed ? 1.0 : 0.0);
      if (r.failed) continue;
      emit(r, "mse", r.mse);
      emit(r, "concordance", r.concordance);
      emit(r, "seconds", r.seconds);
      for (std::size_t j = 0; j < r.covered.size(); ++j)
        emit(r, "covered_" + std::to_string(j + 1),
             static_cast<double>(r.covered[j]));
    }
  }
};

struct GridConfig {
  SgdConfig sgd;
  NewtonConfig newton;
  PluginConfig plugin;
  BootstrapConfig bootstrap;
  double censor_prob = 0.2;
  Vector beta_star;  // empty = ones(p)
  std::uint64_t seed = 0;
  int threads = 0;
};

/// Runs each (method, n, p, s) cell for `replicates` fresh datasets.
/// Dataset seeds depend only on (n, p, replicate), so methods and strata
/// sizes are compared on identical data. Methods: "sgd", "newton",
/// "sgd+plugin", "sgd+bootstrap". Individual fit failures become failure
/// rows, not harness aborts.
inline ExperimentResult run_grid(const std::vector<std::string>& methods,
                                 const std::vector<long>& ns,
                                 const std::vector<int>& ps,
                                 const std::vector<int>& ss, int replicates,
                                 const GridConfig& grid) {
  for (const auto& m : methods)
    if (m != "sgd" && m != "newton" && m != "sgd+plugin" &&
        m != "sgd+bootstrap")
      throw Error("config", "unknown method '" + m + "'");
  if (replicates < 1) throw Error("config", "replicates must be positive");

  ExperimentResult result;
  for (const auto& method : methods)
    for (long n : ns)
      for (int p : ps)
        for (int s : ss)
          for (int rep = 1; rep <= replicates; ++rep)
            result.rows.push_back(
                ExperimentRow{method, n, p, s, rep, 0, 0, 0, {}, false, ""});

  parallel_for(result.rows.size(), grid.threads, [&](std::size_t task) {
    ExperimentRow& row = result.rows[task];
    try {
      SimConfig sim;
      sim.n = row.n;
      sim.p = row.p;
      sim.censor_prob = grid.censor_prob;
      sim.beta_star = grid.beta_star;
      sim.seed = derive_seed(grid.seed,
                             {seed_tag::grid_dataset,
                              static_cast<std::uint64_t>(row.n),
                              static_cast<std::uint64_t>(row.p),
                              static_cast<std::uint64_t>(row.replicate)});
      const Dataset data = generate(sim);
      const Vector beta_star = sim.effective_beta_star();
      const std::uint64_t fit_seed = derive_seed(
          sim.seed, {seed_tag::grid_fit, static_cast<std::uint64_t>(row.s),
                     std::hash<std::string>{}(row.method)});

      detail::Stopwatch watch;
      if (row.method == "newton") {
        NewtonReport rep = newton_fit(data, grid.newton);
        row.mse = mse(rep.beta, beta_star);
        row.concordance = concordance_index(rep.beta, data);
      } else {
        SgdConfig cfg = grid.sgd;
        cfg.strata_size = row.s;
        cfg.seed = fit_seed;
        const FitReport fit = fit_epochs(data, cfg);
        row.mse = mse(fit.beta_tilde, beta_star);
        row.concordance = concordance_index(fit.beta_tilde, data);
        if (row.method == "sgd+plugin") {
          PluginConfig pc = grid.plugin;
          pc.seed = derive_seed(fit_seed, {seed_tag::plugin_obs});
          pc.threads = 1;  // grid already parallelizes across rows
          const IntervalReport ci =
              plugin_ci(fit.beta_tilde, data, cfg.strata_size, pc);
          for (int j = 0; j < row.p; ++j)
            row.covered.push_back(ci.coefficients[j].lower <= beta_star[j] &&
                                  beta_star[j] <= ci.coefficients[j].upper);
        } else if (row.method == "sgd+bootstrap") {
          BootstrapConfig bc = grid.bootstrap;
          bc.seed = derive_seed(fit_seed, {seed_tag::bootstrap_resample});
          bc.threads = 1;
          const IntervalReport ci =
              bootstrap_ci(fit.beta_tilde, data, cfg, bc);
          for (int j = 0; j < row.p; ++j)
            row.covered.push_back(ci.coefficients[j].lower <= beta_star[j] &&
                                  beta_star[j] <= ci.coefficients[j].upper);
        }
      }
      row.seconds = watch.seconds();
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  });
  return result;
}

}  // namespace bigsurv
