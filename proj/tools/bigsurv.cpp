// Command-line front end: fit / newton / ci / simulate / bench over CSV data.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bigsurv/concordance.hpp"
#include "bigsurv/csv.hpp"
#include "bigsurv/inference.hpp"
#include "bigsurv/newton.hpp"
#include "bigsurv/report_json.hpp"
#include "bigsurv/sgd.hpp"
#include "bigsurv/simulation.hpp"

namespace {

using bigsurv::json;

struct DataFlags {
  std::string path;
  std::string time_col = "time";
  std::string status_col = "status";
  std::string entry_col;
  std::vector<std::string> covariate_cols;
  std::size_t chunk_size = 65536;

  void attach(CLI::App* cmd) {
    cmd->add_option("--data", path, "input CSV (header required)")->required();
    cmd->add_option("--time-col", time_col, "follow-up time column");
    cmd->add_option("--status-col", status_col, "event indicator column");
    cmd->add_option("--entry-col", entry_col,
                    "left-truncation entry column (default: 'entry' if present)");
    cmd->add_option("--covariates", covariate_cols,
                    "covariate columns (default: all remaining)")
        ->delimiter(',');
    cmd->add_option("--chunk-size", chunk_size, "rows per chunked read")
        ->check(CLI::PositiveNumber);
  }

  bigsurv::ColumnSpec spec() const {
    bigsurv::ColumnSpec s;
    s.time_col = time_col;
    s.status_col = status_col;
    if (!entry_col.empty()) s.entry_col = entry_col;
    s.covariate_cols = covariate_cols;
    return s;
  }
};

struct SgdFlags {
  bigsurv::SgdConfig config;
  std::string optimizer = "amsgrad";
  std::string ties = "breslow";
  bool no_average = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--strata-size", config.strata_size, "stratum size s");
    cmd->add_option("--batch-size", config.batch_size, "strata per batch K");
    cmd->add_option("--epochs", config.epochs, "passes over the data");
    cmd->add_option("--lr-const", config.lr_const,
                    "C in the schedule gamma_m = C/sqrt(m)");
    cmd->add_option("--optimizer", optimizer, "plain|amsgrad");
    cmd->add_flag("--no-average", no_average,
                  "report the last iterate instead of the running average");
    cmd->add_option("--seed", config.seed, "master RNG seed");
    cmd->add_option("--ties", ties, "tied event times: breslow|error");
    cmd->add_option("--shuffle-buffer", config.shuffle_buffer,
                    "rows per shuffle block in multi-epoch streaming "
                    "(0 disables)");
  }

  bigsurv::SgdConfig resolve() const {
    bigsurv::SgdConfig c = config;
    c.optimizer = bigsurv::optimizer_from_string(optimizer);
    c.ties = bigsurv::ties_policy_from_string(ties);
    c.average_iterates = !no_average;
    c.validate();
    return c;
  }
};

void emit(const json& doc, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << doc.dump(2) << std::endl;
    return;
  }
  std::ofstream out(out_path);
  if (!out)
    throw bigsurv::Error("io", "cannot open '" + out_path + "' for writing");
  out << doc.dump(2) << "\n";
}

int run_fit(const DataFlags& data_flags, const SgdFlags& sgd_flags,
            bool stream, bool no_concordance, const std::string& out_path) {
  const bigsurv::SgdConfig config = sgd_flags.resolve();
  bigsurv::FitReport rep;
  json data_info{{"path", data_flags.path}};

  if (stream) {
    if (config.epochs == 1) {
      bigsurv::ChunkedCsvStream source(data_flags.path, data_flags.spec(),
                                       data_flags.chunk_size);
      rep = bigsurv::fit_streaming(source, config);
      rep.names = source.covariate_names();
    } else {
      std::vector<std::string> names;
      auto factory = [&]() -> std::unique_ptr<bigsurv::SubjectStream> {
        auto s = std::make_unique<bigsurv::ChunkedCsvStream>(
            data_flags.path, data_flags.spec(), data_flags.chunk_size);
        names = s->covariate_names();
        return s;
      };
      rep = bigsurv::fit_streaming_epochs(factory, config);
      rep.names = names;
    }
    data_info["mode"] = "stream";
    data_info["n"] = rep.subjects_seen / rep.epochs_run;
  } else {
    const bigsurv::Dataset data =
        bigsurv::read_dataset(data_flags.path, data_flags.spec(),
                              data_flags.chunk_size);
    rep = bigsurv::fit_epochs(data, config);
    rep.names = data.names();
    if (!no_concordance)
      rep.concordance = bigsurv::concordance_index(rep.beta_tilde, data);
    data_info["mode"] = "memory";
    data_info["n"] = data.size();
  }
  data_info["p"] = rep.beta_tilde.size();

  json doc = bigsurv::fit_report_json(rep);
  doc["command"] = "fit";
  doc["data"] = data_info;
  emit(doc, out_path);
  return 0;
}

int run_newton(const DataFlags& data_flags, bigsurv::NewtonConfig config,
               const std::string& ties, const std::string& out_path) {
  config.ties = bigsurv::ties_policy_from_string(ties);
  config.validate();
  const bigsurv::Dataset data = bigsurv::read_dataset(
      data_flags.path, data_flags.spec(), data_flags.chunk_size);
  const bigsurv::NewtonReport rep = bigsurv::newton_fit(data, config);
  json doc = bigsurv::newton_report_json(rep, config, data.names());
  doc["command"] = "newton";
  doc["data"] = json{{"path", data_flags.path},
                     {"n", data.size()},
                     {"p", data.p()}};
  doc["concordance"] = bigsurv::concordance_index(rep.beta, data);
  emit(doc, out_path);
  return 0;
}

int run_ci(const DataFlags& data_flags, const SgdFlags& sgd_flags,
           const std::string& method, long n_strata_per_obs, double alpha,
           int resamples, int boot_epochs, int threads,
           const std::string& out_path) {
  if (method != "plugin" && method != "bootstrap")
    throw bigsurv::Error("config", "ci method must be plugin or bootstrap");
  const bigsurv::SgdConfig config = sgd_flags.resolve();
  const bigsurv::Dataset data = bigsurv::read_dataset(
      data_flags.path, data_flags.spec(), data_flags.chunk_size);

  bigsurv::FitReport fit = bigsurv::fit_epochs(data, config);
  fit.names = data.names();

  bigsurv::IntervalReport interval;
  if (method == "plugin") {
    bigsurv::PluginConfig pc;
    pc.n_strata_per_obs = n_strata_per_obs;
    pc.alpha = alpha;
    pc.seed = bigsurv::derive_seed(config.seed, {bigsurv::seed_tag::plugin_obs});
    pc.threads = threads;
    interval = bigsurv::plugin_ci(fit.beta_tilde, data, config.strata_size, pc);
  } else {
    bigsurv::BootstrapConfig bc;
    bc.resamples = resamples;
    bc.alpha = alpha;
    bc.epochs = boot_epochs;
    bc.seed = bigsurv::derive_seed(config.seed,
                                   {bigsurv::seed_tag::bootstrap_resample});
    bc.threads = threads;
    interval = bigsurv::bootstrap_ci(fit.beta_tilde, data, config, bc);
  }
  interval.names = data.names();

  json doc = bigsurv::interval_report_json(interval);
  doc["command"] = "ci";
  doc["data"] = json{{"path", data_flags.path},
                     {"n", data.size()},
                     {"p", data.p()}};
  doc["fit"] = bigsurv::fit_report_json(fit);
  emit(doc, out_path);
  return 0;
}

int run_simulate(long n, int p, double pc, std::vector<double> beta_star,
                 std::uint64_t seed, const std::string& out_path) {
  bigsurv::SimConfig config;
  config.n = n;
  config.p = p;
  config.censor_prob = pc;
  config.seed = seed;
  if (!beta_star.empty()) {
    config.beta_star.resize(static_cast<Eigen::Index>(beta_star.size()));
    for (std::size_t j = 0; j < beta_star.size(); ++j)
      config.beta_star[static_cast<Eigen::Index>(j)] = beta_star[j];
  }
  config.validate();
  bigsurv::generate_csv(config, out_path);
  std::cout << json{{"schema_version", bigsurv::kSchemaVersion},
                    {"command", "simulate"},
                    {"path", out_path},
                    {"n", n},
                    {"p", p},
                    {"censor_prob", pc},
                    {"seed", seed}}
                   .dump(2)
            << std::endl;
  return 0;
}

int run_bench(const std::vector<std::string>& methods,
              const std::vector<long>& ns, const std::vector<int>& ps,
              const std::vector<int>& ss, int replicates, double pc,
              std::uint64_t seed, int threads, const SgdFlags& sgd_flags,
              const std::string& out_prefix) {
  bigsurv::GridConfig grid;
  grid.sgd = sgd_flags.resolve();
  grid.censor_prob = pc;
  grid.seed = seed;
  grid.threads = threads;
  const bigsurv::ExperimentResult result =
      bigsurv::run_grid(methods, ns, ps, ss, replicates, grid);

  const std::string csv_path = out_prefix + ".csv";
  const std::string json_path = out_prefix + ".json";
  std::ofstream csv(csv_path);
  if (!csv)
    throw bigsurv::Error("io", "cannot open '" + csv_path + "' for writing");
  result.write_csv(csv);
  std::ofstream js(json_path);
  if (!js)
    throw bigsurv::Error("io", "cannot open '" + json_path + "' for writing");
  js << bigsurv::grid_summary_json(result).dump(2) << "\n";

  std::cout << json{{"schema_version", bigsurv::kSchemaVersion},
                    {"command", "bench"},
                    {"csv", csv_path},
                    {"summary", json_path},
                    {"rows", result.rows.size()}}
                   .dump(2)
            << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cox proportional-hazards regression via strata-based SGD"};
  app.require_subcommand(1);
  std::function<int()> action;

  // fit
  auto* fit = app.add_subcommand("fit", "stochastic-gradient fit");
  auto fit_data = std::make_shared<DataFlags>();
  auto fit_sgd = std::make_shared<SgdFlags>();
  auto fit_stream = std::make_shared<bool>(false);
  auto fit_no_conc = std::make_shared<bool>(false);
  auto fit_out = std::make_shared<std::string>();
  fit_data->attach(fit);
  fit_sgd->attach(fit);
  fit->add_flag("--stream", *fit_stream,
                "out-of-core chunked streaming (no concordance)");
  fit->add_flag("--no-concordance", *fit_no_conc, "skip concordance");
  fit->add_option("--out", *fit_out, "write report JSON here (default stdout)");
  fit->callback([=, &action] {
    action = [=] {
      return run_fit(*fit_data, *fit_sgd, *fit_stream, *fit_no_conc, *fit_out);
    };
  });

  // newton
  auto* newton = app.add_subcommand("newton", "full-likelihood Newton fit");
  auto nw_data = std::make_shared<DataFlags>();
  auto nw_config = std::make_shared<bigsurv::NewtonConfig>();
  auto nw_ties = std::make_shared<std::string>("breslow");
  auto nw_naive = std::make_shared<bool>(false);
  auto nw_out = std::make_shared<std::string>();
  nw_data->attach(newton);
  newton->add_option("--max-iter", nw_config->max_iter, "iteration cap");
  newton->add_option("--tol", nw_config->tol, "score/step tolerance");
  newton->add_flag("!--no-step-halving", nw_config->step_halving,
                   "disable step halving");
  newton->add_flag("--naive-accumulation", *nw_naive,
                   "disable compensated suffix sums");
  newton->add_flag("--standardize", nw_config->standardize,
                   "center/scale covariates internally");
  newton->add_option("--ties", *nw_ties, "breslow|error");
  newton->add_option("--out", *nw_out, "write report JSON here");
  newton->callback([=, &action] {
    action = [=] {
      bigsurv::NewtonConfig c = *nw_config;
      c.compensated = !*nw_naive;
      return run_newton(*nw_data, c, *nw_ties, *nw_out);
    };
  });

  // ci
  auto* ci = app.add_subcommand("ci", "confidence intervals for the SGD fit");
  auto ci_data = std::make_shared<DataFlags>();
  auto ci_sgd = std::make_shared<SgdFlags>();
  auto ci_method = std::make_shared<std::string>();
  auto ci_n_strata = std::make_shared<long>(1000);
  auto ci_alpha = std::make_shared<double>(0.05);
  auto ci_resamples = std::make_shared<int>(1000);
  auto ci_boot_epochs = std::make_shared<int>(100);
  auto ci_threads = std::make_shared<int>(0);
  auto ci_out = std::make_shared<std::string>();
  ci_data->attach(ci);
  ci_sgd->attach(ci);
  ci->add_option("--method", *ci_method, "plugin|bootstrap")->required();
  ci->add_option("--n-strata-per-obs", *ci_n_strata,
                 "plugin strata samples per observation");
  ci->add_option("--alpha", *ci_alpha, "significance level");
  ci->add_option("--resamples", *ci_resamples, "bootstrap resample count");
  ci->add_option("--boot-epochs", *ci_boot_epochs, "epochs per resample");
  ci->add_option("--threads", *ci_threads,
                 "worker threads (default: BIGSURV_THREADS or hardware)");
  ci->add_option("--out", *ci_out, "write report JSON here");
  ci->callback([=, &action] {
    action = [=] {
      return run_ci(*ci_data, *ci_sgd, *ci_method, *ci_n_strata, *ci_alpha,
                    *ci_resamples, *ci_boot_epochs, *ci_threads, *ci_out);
    };
  });

  // simulate
  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset CSV");
  auto sim_n = std::make_shared<long>(1000);
  auto sim_p = std::make_shared<int>(10);
  auto sim_pc = std::make_shared<double>(0.2);
  auto sim_beta = std::make_shared<std::vector<double>>();
  auto sim_seed = std::make_shared<std::uint64_t>(0);
  auto sim_out = std::make_shared<std::string>();
  sim->add_option("--n", *sim_n, "rows")->check(CLI::PositiveNumber);
  sim->add_option("--p", *sim_p, "covariates")->check(CLI::PositiveNumber);
  sim->add_option("--pc", *sim_pc, "censoring probability");
  sim->add_option("--beta-star", *sim_beta, "true coefficients (default ones)")
      ->delimiter(',');
  sim->add_option("--seed", *sim_seed, "RNG seed");
  sim->add_option("--out", *sim_out, "output CSV path")->required();
  sim->callback([=, &action] {
    action = [=] {
      return run_simulate(*sim_n, *sim_p, *sim_pc, *sim_beta, *sim_seed,
                          *sim_out);
    };
  });

  // bench
  auto* bench = app.add_subcommand("bench", "simulation experiment grid");
  auto be_methods = std::make_shared<std::vector<std::string>>(
      std::vector<std::string>{"sgd"});
  auto be_ns = std::make_shared<std::vector<long>>(std::vector<long>{1000});
  auto be_ps = std::make_shared<std::vector<int>>(std::vector<int>{10});
  auto be_ss = std::make_shared<std::vector<int>>(std::vector<int>{20});
  auto be_reps = std::make_shared<int>(50);
  auto be_pc = std::make_shared<double>(0.2);
  auto be_seed = std::make_shared<std::uint64_t>(0);
  auto be_threads = std::make_shared<int>(0);
  auto be_sgd = std::make_shared<SgdFlags>();
  auto be_prefix = std::make_shared<std::string>();
  bench->add_option("--methods", *be_methods,
                    "sgd|newton|sgd+plugin|sgd+bootstrap")
      ->delimiter(',');
  bench->add_option("--ns", *be_ns, "sample sizes")->delimiter(',');
  bench->add_option("--ps", *be_ps, "feature counts")->delimiter(',');
  bench->add_option("--ss", *be_ss, "strata sizes")->delimiter(',');
  bench->add_option("--replicates", *be_reps, "replicates per cell");
  bench->add_option("--pc", *be_pc, "censoring probability");
  bench->add_option("--seed", *be_seed, "master seed");
  bench->add_option("--threads", *be_threads, "worker threads");
  be_sgd->attach(bench);
  bench->add_option("--out-prefix", *be_prefix, "output path prefix")
      ->required();
  bench->callback([=, &action] {
    action = [=] {
      return run_bench(*be_methods, *be_ns, *be_ps, *be_ss, *be_reps, *be_pc,
                       *be_seed, *be_threads, *be_sgd, *be_prefix);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return action();
  } catch (const bigsurv::Error& e) {
    std::cout << bigsurv::error_json(e.code(), e.what()).dump(2) << std::endl;
    std::cerr << "error (" << e.code() << "): " << e.what() << std::endl;
    return e.code() == "config" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cout << bigsurv::error_json("internal", e.what()).dump(2) << std::endl;
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
