#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "bigsurv/types.hpp"

namespace bigsurv {

/// Log-partial-likelihood, gradient, and (optional) curvature of one stratum.
/// `gradient` is the gradient of the log-likelihood; `hessian` is the Hessian
/// of the NEGATIVE log-likelihood (observed information), symmetric PSD for a
/// linear predictor.
struct StratumKernel {
  double loglik = 0.0;
  Vector gradient;
  std::optional<Matrix> hessian;
};

/// Reusable scratch buffers for repeated stratum evaluations.
struct StratumScratch {
  std::vector<double> eta;
  std::vector<double> ez;
  std::vector<int> risk;
  Vector wx;
};

namespace detail {

inline void check_stratum(std::span<const int> stratum, const Dataset& data) {
  if (stratum.size() < 2)
    throw Error("config", "stratum size must be at least 2");
  for (int idx : stratum)
    if (idx < 0 || static_cast<std::size_t>(idx) >= data.size())
      throw Error("contract", "stratum index " + std::to_string(idx) +
                                  " out of dataset range");
}

inline void check_ties(std::span<const int> stratum, const Dataset& data,
                       TiesPolicy ties) {
  if (ties == TiesPolicy::breslow) return;
  for (std::size_t a = 0; a < stratum.size(); ++a) {
    if (data[stratum[a]].status != 1) continue;
    for (std::size_t b = a + 1; b < stratum.size(); ++b)
      if (data[stratum[b]].status == 1 &&
          data[stratum[b]].time == data[stratum[a]].time)
        throw Error("ties", "tied event times in stratum (subjects " +
                                std::to_string(stratum[a]) + ", " +
                                std::to_string(stratum[b]) + ")");
  }
}

}  // namespace detail

/// Subjects of `stratum` still at risk when subject `i` fails: enrolled by
/// time_i and not yet failed or censored. `i` itself is always included.
inline std::vector<int> risk_set(std::span<const int> stratum,
                                 const Dataset& data, int i) {
  bool member = false;
  for (int idx : stratum) member = member || idx == i;
  if (!member)
    throw Error("contract",
                "subject " + std::to_string(i) + " is not in the stratum");
  const double t = data[i].time;
  std::vector<int> out;
  out.reserve(stratum.size());
  for (int j : stratum)
    if (data[j].time >= t && data[j].entry <= t) out.push_back(j);
  return out;
}

inline std::vector<int> risk_set(const StratumView& stratum,
                                 const Dataset& data, int i) {
  return risk_set(stratum.span(), data, i);
}

/// Core evaluator. One pass over the stratum's event subjects; every
/// log-sum-exp / softmax subtracts the per-risk-set maximum before
/// exponentiation.
inline StratumKernel stratum_kernel(const Vector& beta,
                                    std::span<const int> stratum,
                                    const Dataset& data, bool want_hessian,
                                    TiesPolicy ties, StratumScratch& scratch) {
  detail::check_stratum(stratum, data);
  detail::check_ties(stratum, data, ties);
  const int s = static_cast<int>(stratum.size());
  const Eigen::Index p = data.p();

  scratch.eta.resize(s);
  scratch.ez.resize(s);
  for (int k = 0; k < s; ++k)
    scratch.eta[k] = beta.dot(data[stratum[k]].covariates);

  StratumKernel out;
  out.gradient = Vector::Zero(p);
  if (want_hessian) out.hessian = Matrix::Zero(p, p);
  if (scratch.wx.size() != p) scratch.wx.resize(p);

  for (int k = 0; k < s; ++k) {
    const Subject& subj = data[stratum[k]];
    if (subj.status != 1) continue;
    const double t = subj.time;

    scratch.risk.clear();
    double mx = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < s; ++l) {
      const Subject& other = data[stratum[l]];
      if (other.time >= t && other.entry <= t) {
        scratch.risk.push_back(l);
        mx = std::max(mx, scratch.eta[l]);
      }
    }

    double denom = 0.0;
    for (int l : scratch.risk) {
      scratch.ez[l] = std::exp(scratch.eta[l] - mx);
      denom += scratch.ez[l];
    }
    out.loglik += scratch.eta[k] - (std::log(denom) + mx);

    scratch.wx.setZero();
    for (int l : scratch.risk) {
      const double w = scratch.ez[l] / denom;
      scratch.wx.noalias() += w * data[stratum[l]].covariates;
      if (want_hessian)
        out.hessian->selfadjointView<Eigen::Lower>().rankUpdate(
            data[stratum[l]].covariates, w);
    }
    out.gradient.noalias() += subj.covariates - scratch.wx;
    if (want_hessian)
      out.hessian->selfadjointView<Eigen::Lower>().rankUpdate(scratch.wx, -1.0);
  }
  if (want_hessian)
    *out.hessian = out.hessian->selfadjointView<Eigen::Lower>();
  return out;
}

inline double stratum_loglik(const Vector& beta, std::span<const int> stratum,
                             const Dataset& data,
                             TiesPolicy ties = TiesPolicy::breslow) {
  StratumScratch scratch;
  return stratum_kernel(beta, stratum, data, false, ties, scratch).loglik;
}

inline Vector stratum_gradient(const Vector& beta, std::span<const int> stratum,
                               const Dataset& data,
                               TiesPolicy ties = TiesPolicy::breslow) {
  StratumScratch scratch;
  return stratum_kernel(beta, stratum, data, false, ties, scratch).gradient;
}

/// Hessian of the negative stratum log-likelihood.
inline Matrix stratum_hessian(const Vector& beta, std::span<const int> stratum,
                              const Dataset& data,
                              TiesPolicy ties = TiesPolicy::breslow) {
  StratumScratch scratch;
  return *stratum_kernel(beta, stratum, data, true, ties, scratch).hessian;
}

/// Pairwise (s = 2) smoothed-concordance loss. The term of the earlier
/// subject is active when that subject is an event and the later subject is
/// already enrolled; evaluation order matches stratum_loglik exactly, so the
/// two agree bitwise on untruncated, untied pairs.
inline double pairwise_loss(const Vector& beta, std::span<const int> pair,
                            const Dataset& data) {
  if (pair.size() != 2)
    throw Error("contract", "pairwise loss requires a stratum of size 2");
  detail::check_stratum(pair, data);
  const Subject& a = data[pair[0]];
  const Subject& b = data[pair[1]];
  const double eta0 = beta.dot(a.covariates);
  const double eta1 = beta.dot(b.covariates);

  int winner = -1;  // stratum position of the active (earlier, event) subject
  if (a.time < b.time && a.status == 1 && b.entry <= a.time) winner = 0;
  if (b.time < a.time && b.status == 1 && a.entry <= b.time) winner = 1;
  if (winner < 0) return 0.0;

  const double mx = std::max(eta0, eta1);
  const double denom = std::exp(eta0 - mx) + std::exp(eta1 - mx);
  const double lse = std::log(denom) + mx;
  return (winner == 0 ? eta0 : eta1) - lse;
}

inline double pairwise_loss(const Vector& beta, const StratumView& pair,
                            const Dataset& data) {
  return pairwise_loss(beta, pair.span(), data);
}

}  // namespace bigsurv
