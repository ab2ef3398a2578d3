#pragma once

#include <cmath>
#include <map>
#include <string>

#include <json.hpp>

#include "bigsurv/inference.hpp"
#include "bigsurv/newton.hpp"
#include "bigsurv/sgd.hpp"
#include "bigsurv/simulation.hpp"

namespace bigsurv {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json finite_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

inline json config_json(const SgdConfig& c) {
  return json{{"strata_size", c.strata_size},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lr_const", c.lr_const},
              {"optimizer", to_string(c.optimizer)},
              {"average_iterates", c.average_iterates},
              {"seed", c.seed},
              {"amsgrad_beta1", c.amsgrad_beta1},
              {"amsgrad_beta2", c.amsgrad_beta2},
              {"amsgrad_eps", c.amsgrad_eps},
              {"ties", to_string(c.ties)},
              {"shuffle_buffer", c.shuffle_buffer}};
}

inline json config_json(const NewtonConfig& c) {
  return json{{"max_iter", c.max_iter},
              {"tol", c.tol},
              {"step_halving", c.step_halving},
              {"compensated", c.compensated},
              {"standardize", c.standardize},
              {"ties", to_string(c.ties)}};
}

inline json fit_report_json(const FitReport& rep) {
  json names = json::array();
  for (Eigen::Index j = 0; j < rep.beta_tilde.size(); ++j)
    names.push_back(j < static_cast<Eigen::Index>(rep.names.size())
                        ? rep.names[j]
                        : "x" + std::to_string(j + 1));
  json hr = json::array();
  for (Eigen::Index j = 0; j < rep.beta_tilde.size(); ++j)
    hr.push_back(std::exp(rep.beta_tilde[j]));
  json out{{"schema_version", kSchemaVersion},
           {"names", names},
           {"beta_hat", to_json(rep.beta_hat)},
           {"beta_tilde", to_json(rep.beta_tilde)},
           {"hazard_ratio", hr},
           {"steps", rep.steps},
           {"epochs_run", rep.epochs_run},
           {"subjects_seen", rep.subjects_seen},
           {"dropped_subjects", rep.dropped_subjects},
           {"partial_stratum_warnings", rep.partial_stratum_warnings},
           {"seconds", rep.seconds},
           {"final_grad_inf_norm", rep.final_grad_inf_norm},
           {"peak_rss_bytes", rep.peak_rss_bytes},
           {"config", config_json(rep.config)}};
  out["concordance"] =
      rep.concordance ? json(*rep.concordance) : json(nullptr);
  return out;
}

inline json newton_report_json(const NewtonReport& rep,
                               const NewtonConfig& config,
                               const std::vector<std::string>& names) {
  json name_arr = json::array();
  json hr = json::array();
  for (Eigen::Index j = 0; j < rep.beta.size(); ++j) {
    name_arr.push_back(j < static_cast<Eigen::Index>(names.size())
                           ? names[j]
                           : "x" + std::to_string(j + 1));
    hr.push_back(std::exp(rep.beta[j]));
  }
  return json{{"schema_version", kSchemaVersion},
              {"names", name_arr},
              {"beta", to_json(rep.beta)},
              {"hazard_ratio", hr},
              {"std_error", to_json(rep.std_error)},
              {"loglik", rep.loglik},
              {"iterations", rep.iterations},
              {"converged", rep.converged},
              {"condition", rep.condition},
              {"observed_information", to_json(rep.observed_information)},
              {"config", config_json(config)}};
}

inline json interval_report_json(const IntervalReport& rep) {
  json coefs = json::array();
  for (std::size_t j = 0; j < rep.coefficients.size(); ++j) {
    const CoefInterval& c = rep.coefficients[j];
    json entry{{"name", j < rep.names.size() ? rep.names[j]
                                             : "x" + std::to_string(j + 1)},
               {"estimate", c.estimate},
               {"se", finite_or_null(c.se)},
               {"lower", c.lower},
               {"upper", c.upper},
               {"hazard_ratio",
                json{{"estimate", std::exp(c.estimate)},
                     {"lower", std::exp(c.lower)},
                     {"upper", std::exp(c.upper)}}}};
    coefs.push_back(entry);
  }
  json out{{"schema_version", kSchemaVersion},
           {"method", rep.method},
           {"alpha", rep.alpha},
           {"seed", rep.seed},
           {"coefficients", coefs}};
  if (rep.method == "plugin") {
    out["n_strata_per_obs"] = rep.n_strata_per_obs;
    out["sampling"] = rep.sampling;
    out["v_hat"] = to_json(rep.v_hat);
    out["h_hat"] = to_json(rep.h_hat);
  } else {
    out["resamples"] = rep.resamples;
    out["dropped_resamples"] = rep.dropped_resamples;
    out["quantile_definition"] = rep.quantile_definition;
  }
  return out;
}

inline json error_json(const std::string& code, const std::string& message) {
  return json{{"schema_version", kSchemaVersion},
              {"error", json{{"code", code}, {"message", message}}}};
}

/// Per-cell aggregation of a grid run.
inline json grid_summary_json(const ExperimentResult& result) {
  struct Agg {
    int n_rows = 0, failed = 0;
    double mse_sum = 0, mse_sq = 0, conc_sum = 0, sec_sum = 0;
    long covered = 0, cover_total = 0;
  };
  std::map<std::string, Agg> cells;
  auto key = [](const ExperimentRow& r) {
    return r.method + "|" + std::to_string(r.n) + "|" + std::to_string(r.p) +
           "|" + std::to_string(r.s);
  };
  for (const auto& r : result.rows) {
    Agg& a = cells[key(r)];
    ++a.n_rows;
    if (r.failed) {
      ++a.failed;
      continue;
    }
    a.mse_sum += r.mse;
    a.mse_sq += r.mse * r.mse;
    a.conc_sum += r.concordance;
    a.sec_sum += r.seconds;
    for (int c : r.covered) {
      a.covered += c;
      ++a.cover_total;
    }
  }
  json out = json::array();
  for (const auto& [k, a] : cells) {
    const auto p1 = k.find('|');
    const auto p2 = k.find('|', p1 + 1);
    const auto p3 = k.find('|', p2 + 1);
    const int good = a.n_rows - a.failed;
    json cell{{"method", k.substr(0, p1)},
              {"n", std::stol(k.substr(p1 + 1, p2 - p1 - 1))},
              {"p", std::stoi(k.substr(p2 + 1, p3 - p2 - 1))},
              {"s", std::stoi(k.substr(p3 + 1))},
              {"replicates", a.n_rows},
              {"failed", a.failed}};
    if (good > 0) {
      const double mean = a.mse_sum / good;
      cell["mse_mean"] = mean;
      cell["mse_sd"] = good > 1 ? std::sqrt(std::max(
                                      0.0, (a.mse_sq - good * mean * mean) /
                                               (good - 1)))
                                : 0.0;
      cell["concordance_mean"] = a.conc_sum / good;
      cell["seconds_mean"] = a.sec_sum / good;
      cell["coverage"] = a.cover_total > 0
                             ? json(static_cast<double>(a.covered) /
                                    static_cast<double>(a.cover_total))
                             : json(nullptr);
    }
    out.push_back(cell);
  }
  return json{{"schema_version", kSchemaVersion}, {"cells", out}};
}

}  // namespace bigsurv
