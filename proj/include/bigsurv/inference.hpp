#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "bigsurv/mathutil.hpp"
#include "bigsurv/parallel.hpp"
#include "bigsurv/rng.hpp"
#include "bigsurv/sgd.hpp"
#include "bigsurv/stratum_likelihood.hpp"
#include "bigsurv/types.hpp"

namespace bigsurv {

struct PluginConfig {
  long n_strata_per_obs = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 0;

  void validate() const {
    if (n_strata_per_obs < 1)
      throw Error("config", "n_strata_per_obs must be positive");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw Error("config", "alpha must be in (0,1)");
  }
};

struct BootstrapConfig {
  int resamples = 1000;
  double alpha = 0.05;
  int epochs = 100;  // epochs per resample refit
  std::uint64_t seed = 0;
  int threads = 0;
  double max_drop_fraction = 0.05;

  void validate() const {
    if (resamples < 2) throw Error("config", "resamples must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0))
      throw Error("config", "alpha must be in (0,1)");
    if (epochs < 1) throw Error("config", "epochs must be positive");
  }
};

struct CoefInterval {
  double estimate = 0.0;
  double se = std::numeric_limits<double>::quiet_NaN();  // plug-in only
  double lower = 0.0;
  double upper = 0.0;
};

struct IntervalReport {
  std::string method;  // "plugin" | "bootstrap"
  double alpha = 0.05;
  std::vector<CoefInterval> coefficients;
  std::vector<std::string> names;
  Matrix v_hat;  // plugin: s^2/n * sum r r'
  Matrix h_hat;  // plugin: mean sampled information
  long n_strata_per_obs = 0;
  std::string sampling;  // plugin subset-sampling note
  int resamples = 0;
  int dropped_resamples = 0;
  std::string quantile_definition;  // bootstrap quantile rule
  std::uint64_t seed = 0;
};

/// Sampled per-observation score and information of Eq-style incomplete
/// U-statistic inference.
struct RHat {
  Vector r;  // mean over draws of the negative stratum gradient
  Matrix h;  // mean over draws of the stratum information
};

namespace detail {

/// C(n, k) saturating at 2^62 (enough to compare against any practical n_o).
inline std::uint64_t binomial_saturating(long n, long k) {
  constexpr std::uint64_t cap = 1ull << 62;
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long double acc = 1.0L;
  for (long i = 1; i <= k; ++i) {
    acc *= static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (acc >= static_cast<long double>(cap)) return cap;
  }
  return static_cast<std::uint64_t>(acc + 0.5L);
}

}  // namespace detail

/// Mean negative gradient and mean information of -pl over strata {i} joined
/// with (s-1)-subsets of the remaining subjects. Enumerates all subsets
/// lexicographically when n_o covers them (then the result is
/// seed-independent); otherwise draws n_o subsets, distinct within a draw and
/// independent across draws.
inline RHat sampled_r_hat(int i, const Vector& beta, const Dataset& data,
                          int strata_size, long n_o, Rng& rng) {
  const long n = static_cast<long>(data.size());
  const int s = strata_size;
  if (s < 2) throw Error("config", "strata size must be >= 2");
  if (n - 1 < s - 1)
    throw Error("config", "not enough subjects to form a stratum around " +
                              std::to_string(i));
  if (n_o < 1) throw Error("config", "n_strata_per_obs must be positive");

  const Eigen::Index p = data.p();
  Vector r_sum = Vector::Zero(p);
  Matrix h_sum = Matrix::Zero(p, p);
  StratumScratch scratch;
  std::vector<int> stratum(s);
  stratum[0] = i;
  long count = 0;

  auto accumulate = [&] {
    const StratumKernel kernel = stratum_kernel(
        beta, stratum, data, true, TiesPolicy::breslow, scratch);
    r_sum -= kernel.gradient;
    h_sum += *kernel.hessian;
    ++count;
  };

  const std::uint64_t total = detail::binomial_saturating(n - 1, s - 1);
  if (static_cast<std::uint64_t>(n_o) >= total) {
    // complete enumeration: lexicographic combinations of the others
    std::vector<int> others;
    others.reserve(n - 1);
    for (long j = 0; j < n; ++j)
      if (j != i) others.push_back(static_cast<int>(j));
    const int k = s - 1;
    std::vector<int> pos(k);
    for (int t = 0; t < k; ++t) pos[t] = t;
    for (;;) {
      for (int t = 0; t < k; ++t) stratum[t + 1] = others[pos[t]];
      accumulate();
      int t = k - 1;
      while (t >= 0 && pos[t] == static_cast<int>(others.size()) - k + t) --t;
      if (t < 0) break;
      ++pos[t];
      for (int u = t + 1; u < k; ++u) pos[u] = pos[u - 1] + 1;
    }
  } else {
    std::vector<int> draw;
    for (long d = 0; d < n_o; ++d) {
      draw.clear();
      rng.sample_excluding(static_cast<std::size_t>(n),
                           static_cast<std::size_t>(s - 1),
                           static_cast<std::size_t>(i), draw);
      for (int t = 0; t < s - 1; ++t) stratum[t + 1] = draw[t];
      accumulate();
    }
  }

  RHat out;
  out.r = r_sum / static_cast<double>(count);
  out.h = h_sum / static_cast<double>(count);
  return out;
}

/// Plug-in sandwich interval: V = s^2/n sum r r', H = mean information,
/// SE = sqrt(diag(H^-1 V H^-1) / n), CI = beta +- z_{alpha/2} SE.
/// Per-observation draws run in parallel; each observation owns a derived
/// seed substream so results do not depend on scheduling.
inline IntervalReport plugin_ci(const Vector& beta_tilde, const Dataset& data,
                                int strata_size, const PluginConfig& config) {
  config.validate();
  const long n = static_cast<long>(data.size());
  const Eigen::Index p = data.p();
  if (beta_tilde.size() != p)
    throw Error("config", "beta length does not match dataset");
  if (n < strata_size)
    throw Error("config", "dataset smaller than one stratum");

  constexpr std::size_t kBlock = 32;
  const std::size_t blocks = (static_cast<std::size_t>(n) + kBlock - 1) / kBlock;
  std::vector<Matrix> v_part(blocks), h_part(blocks);

  parallel_for(blocks, config.threads, [&](std::size_t blk) {
    Matrix v = Matrix::Zero(p, p);
    Matrix h = Matrix::Zero(p, p);
    const std::size_t lo = blk * kBlock;
    const std::size_t hi = std::min<std::size_t>(lo + kBlock, n);
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(config.seed,
                          {seed_tag::plugin_obs, static_cast<std::uint64_t>(i)}));
      const RHat rh = sampled_r_hat(static_cast<int>(i), beta_tilde, data,
                                    strata_size, config.n_strata_per_obs, rng);
      v.selfadjointView<Eigen::Lower>().rankUpdate(rh.r, 1.0);
      h += rh.h;
    }
    v_part[blk] = v.selfadjointView<Eigen::Lower>();
    h_part[blk] = h;
  });

  Matrix v_hat = Matrix::Zero(p, p);
  Matrix h_hat = Matrix::Zero(p, p);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    v_hat += v_part[blk];
    h_hat += h_part[blk];
  }
  const double s2 = static_cast<double>(strata_size) *
                    static_cast<double>(strata_size);
  v_hat *= s2 / static_cast<double>(n);
  h_hat /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Matrix> es(h_hat, Eigen::EigenvaluesOnly);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > 1e12)
    throw Error("non_identifiable",
                "sampled information matrix is not invertible");

  const Matrix h_inv = h_hat.ldlt().solve(Matrix::Identity(p, p));
  const Matrix cov = h_inv * v_hat * h_inv;
  const double z = normal_quantile(1.0 - config.alpha / 2.0);

  IntervalReport rep;
  rep.method = "plugin";
  rep.alpha = config.alpha;
  rep.v_hat = v_hat;
  rep.h_hat = h_hat;
  rep.n_strata_per_obs = config.n_strata_per_obs;
  rep.sampling = "subsets distinct within a draw, independent across draws";
  rep.seed = config.seed;
  rep.names = data.names();
  rep.coefficients.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double se = std::sqrt(cov(j, j) / static_cast<double>(n));
    rep.coefficients[j] = CoefInterval{beta_tilde[j], se,
                                       beta_tilde[j] - z * se,
                                       beta_tilde[j] + z * se};
  }
  return rep;
}

/// Polyak–Ruppert bootstrap: B resamples with replacement, each refit by
/// fit_epochs warm-started at beta_tilde with a fresh step counter;
/// CI = (beta - q_{1-a/2}, beta - q_{a/2}) from midpoint quantiles of
/// beta^b - beta. Resamples run in parallel on derived seed substreams.
inline IntervalReport bootstrap_ci(const Vector& beta_tilde,
                                   const Dataset& data,
                                   const SgdConfig& sgd_config,
                                   const BootstrapConfig& config) {
  config.validate();
  sgd_config.validate();
  const long n = static_cast<long>(data.size());
  const Eigen::Index p = data.p();
  if (beta_tilde.size() != p)
    throw Error("config", "beta length does not match dataset");

  const int B = config.resamples;
  std::vector<Vector> boot(B);
  std::vector<char> ok(B, 0);
  std::vector<std::string> why(B);

  parallel_for(static_cast<std::size_t>(B), config.threads, [&](std::size_t b) {
    try {
      Rng rng(derive_seed(config.seed, {seed_tag::bootstrap_resample,
                                        static_cast<std::uint64_t>(b)}));
      std::vector<Subject> resampled;
      resampled.reserve(n);
      for (long i = 0; i < n; ++i)
        resampled.push_back(
            data[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))]);
      Dataset resample(std::move(resampled), data.names());

      SgdConfig cfg = sgd_config;
      cfg.epochs = config.epochs;
      cfg.seed = derive_seed(config.seed, {seed_tag::bootstrap_fit,
                                           static_cast<std::uint64_t>(b)});
      boot[b] = fit_epochs(resample, cfg, &beta_tilde).beta_tilde;
      ok[b] = 1;
    } catch (const std::exception& e) {
      why[b] = e.what();
    }
  });

  int dropped = 0;
  for (int b = 0; b < B; ++b)
    if (!ok[b]) ++dropped;
  if (dropped > config.max_drop_fraction * B) {
    std::string first;
    for (int b = 0; b < B; ++b)
      if (!ok[b]) {
        first = why[b];
        break;
      }
    throw Error("numeric", std::to_string(dropped) + "/" + std::to_string(B) +
                               " bootstrap refits failed (first: " + first +
                               ")");
  }

  IntervalReport rep;
  rep.method = "bootstrap";
  rep.alpha = config.alpha;
  rep.resamples = B;
  rep.dropped_resamples = dropped;
  rep.quantile_definition = "midpoint of floor/ceil order statistics";
  rep.seed = config.seed;
  rep.names = data.names();
  rep.coefficients.resize(p);
  std::vector<double> delta;
  delta.reserve(B);
  for (Eigen::Index j = 0; j < p; ++j) {
    delta.clear();
    for (int b = 0; b < B; ++b)
      if (ok[b]) delta.push_back(boot[b][j] - beta_tilde[j]);
    std::sort(delta.begin(), delta.end());
    const double q_lo = quantile_midpoint(delta, config.alpha / 2.0);
    const double q_hi = quantile_midpoint(delta, 1.0 - config.alpha / 2.0);
    rep.coefficients[j].estimate = beta_tilde[j];
    rep.coefficients[j].lower = beta_tilde[j] - q_hi;
    rep.coefficients[j].upper = beta_tilde[j] - q_lo;
  }
  return rep;
}

}  // namespace bigsurv
