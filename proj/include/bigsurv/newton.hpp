#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bigsurv/mathutil.hpp"
#include "bigsurv/types.hpp"

namespace bigsurv {

struct NewtonConfig {
  int max_iter = 50;
  double tol = 1e-9;           // on score inf-norm and step inf-norm
  bool step_halving = true;
  bool compensated = true;     // error-corrected suffix accumulation
  bool standardize = false;    // center/scale covariates, back-transform fit
  TiesPolicy ties = TiesPolicy::breslow;

  void validate() const {
    if (max_iter < 1) throw Error("config", "max_iter must be positive");
    if (!(tol > 0)) throw Error("config", "tol must be positive");
  }
};

struct NewtonReport {
  Vector beta;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  Matrix observed_information;
  Vector std_error;        // sqrt(diag(information^-1)), comparison only
  double condition = 0.0;  // eigenvalue condition estimate of the information
};

struct FullLikelihood {
  double loglik = 0.0;
  Vector gradient;     // of the log-partial-likelihood
  Matrix information;  // Hessian of the negative log-partial-likelihood
};

namespace detail {

/// Precomputed sweep orders, shared across evaluations at different beta.
struct SweepPlan {
  std::vector<int> by_exit;    // indices sorted by follow-up time, descending
  std::vector<int> by_entry;   // indices sorted by entry time, descending
  std::vector<int> events;     // event indices sorted by time, descending
  bool has_entries = false;

  explicit SweepPlan(const Dataset& data, TiesPolicy ties) {
    const int n = static_cast<int>(data.size());
    by_exit.resize(n);
    std::iota(by_exit.begin(), by_exit.end(), 0);
    std::stable_sort(by_exit.begin(), by_exit.end(), [&](int a, int b) {
      return data[a].time > data[b].time;
    });
    for (int i = 0; i < n; ++i)
      if (data[i].entry > 0.0) {
        has_entries = true;
        break;
      }
    if (has_entries) {
      by_entry = by_exit;
      std::stable_sort(by_entry.begin(), by_entry.end(), [&](int a, int b) {
        return data[a].entry > data[b].entry;
      });
    }
    for (int i : by_exit)
      if (data[i].status == 1) events.push_back(i);
    if (ties == TiesPolicy::error)
      for (std::size_t k = 1; k < events.size(); ++k)
        if (data[events[k]].time == data[events[k - 1]].time)
          throw Error("ties", "tied event times (subjects " +
                                  std::to_string(events[k - 1]) + ", " +
                                  std::to_string(events[k]) + ")");
  }
};

template <bool kCompensated>
struct SuffixSums {
  Kahan<double> s0;
  Kahan<Vector> s1;
  Kahan<Matrix> s2;
  bool with_hessian;

  SuffixSums(Eigen::Index p, bool hess)
      : s0(0.0),
        s1(Vector::Zero(p)),
        s2(hess ? Matrix::Zero(p, p) : Matrix::Zero(0, 0)),
        with_hessian(hess) {}

  void apply(double e, const Vector& x, double sign) {
    if constexpr (kCompensated) {
      s0.add(sign * e);
      s1.add(Vector(sign * e * x));
      if (with_hessian) s2.add(Matrix(sign * e * x * x.transpose()));
    } else {
      s0.sum += sign * e;
      s1.sum += sign * e * x;
      if (with_hessian) s2.sum += sign * e * x * x.transpose();
    }
  }
};

template <bool kCompensated>
FullLikelihood full_sweep(const Vector& beta, const Dataset& data,
                          const SweepPlan& plan, bool want_gradient,
                          bool want_hessian) {
  const int n = static_cast<int>(data.size());
  const Eigen::Index p = data.p();

  std::vector<double> eta(n), ez(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    eta[i] = beta.dot(data[i].covariates);
    mx = std::max(mx, eta[i]);
  }
  if (!std::isfinite(mx))
    throw Error("numeric", "nonfinite linear predictor in full likelihood");
  for (int i = 0; i < n; ++i) ez[i] = std::exp(eta[i] - mx);

  FullLikelihood out;
  out.gradient = Vector::Zero(want_gradient ? p : 0);
  out.information = Matrix::Zero(want_hessian ? p : 0, want_hessian ? p : 0);
  SuffixSums<kCompensated> acc(p, want_hessian);

  std::size_t add = 0, rem = 0, ev = 0;
  while (ev < plan.events.size()) {
    const double t = data[plan.events[ev]].time;
    while (add < plan.by_exit.size() &&
           data[plan.by_exit[add]].time >= t) {
      const int j = plan.by_exit[add++];
      acc.apply(ez[j], data[j].covariates, +1.0);
    }
    if (plan.has_entries)
      while (rem < plan.by_entry.size() &&
             data[plan.by_entry[rem]].entry > t) {
        const int j = plan.by_entry[rem++];
        acc.apply(ez[j], data[j].covariates, -1.0);
      }

    const double denom = acc.s0.sum;
    if (!(denom > 0.0) || !std::isfinite(denom))
      throw Error("numeric",
                  "risk-set accumulator degenerated at subject " +
                      std::to_string(plan.events[ev]));
    // all events tied at this time share the same risk set
    while (ev < plan.events.size() && data[plan.events[ev]].time == t) {
      const int i = plan.events[ev++];
      out.loglik += eta[i] - (std::log(denom) + mx);
      if (want_gradient)
        out.gradient.noalias() += data[i].covariates - acc.s1.sum / denom;
      if (want_hessian) {
        out.information.noalias() += acc.s2.sum / denom;
        out.information.noalias() -=
            (acc.s1.sum / denom) * (acc.s1.sum / denom).transpose();
      }
    }
  }
  return out;
}

struct Standardizer {
  Vector center;
  Vector scale;  // 1 where a covariate is constant

  explicit Standardizer(const Dataset& data) {
    const Eigen::Index p = data.p();
    const double n = static_cast<double>(data.size());
    center = Vector::Zero(p);
    for (const auto& s : data.subjects()) center += s.covariates;
    center /= n;
    Vector var = Vector::Zero(p);
    for (const auto& s : data.subjects())
      var += (s.covariates - center).cwiseAbs2();
    var /= n;
    scale = var.cwiseSqrt().cwiseMax(0.0);
    for (Eigen::Index j = 0; j < p; ++j)
      if (scale[j] == 0.0) scale[j] = 1.0;
  }

  Dataset transform(const Dataset& data) const {
    std::vector<Subject> out;
    out.reserve(data.size());
    for (const auto& s : data.subjects()) {
      Subject t = s;
      t.covariates = (s.covariates - center).cwiseQuotient(scale);
      out.push_back(std::move(t));
    }
    return Dataset(std::move(out), data.names());
  }
};

}  // namespace detail

/// Full-dataset log-partial-likelihood, gradient, and observed information in
/// one descending-time sweep with suffix-accumulated sums; left truncation is
/// handled by an entry/exit queue. O(n p^2) after an O(n log n) sort.
inline FullLikelihood full_loglik_grad_hess(const Vector& beta,
                                            const Dataset& data,
                                            const NewtonConfig& config = {}) {
  if (data.size() < 2)
    throw Error("config", "full likelihood requires at least two subjects");
  detail::SweepPlan plan(data, config.ties);
  return config.compensated
             ? detail::full_sweep<true>(beta, data, plan, true, true)
             : detail::full_sweep<false>(beta, data, plan, true, true);
}

/// Damped Newton–Raphson maximizer of the full log-partial-likelihood.
inline NewtonReport newton_fit(const Dataset& data, NewtonConfig config = {}) {
  config.validate();
  if (data.size() < 2)
    throw Error("config", "newton fit requires at least two subjects");
  bool any_event = false;
  for (const auto& s : data.subjects()) any_event = any_event || s.status == 1;
  if (!any_event)
    throw Error("config", "newton fit requires at least one event");

  if (config.standardize) {
    detail::Standardizer std_op(data);
    NewtonConfig raw = config;
    raw.standardize = false;
    NewtonReport rep = newton_fit(std_op.transform(data), raw);
    // beta_j = beta'_j / scale_j; information transforms with diag(scale)
    rep.beta = rep.beta.cwiseQuotient(std_op.scale);
    const Matrix d = std_op.scale.asDiagonal();
    rep.observed_information = d * rep.observed_information * d;
    rep.std_error = rep.std_error.cwiseQuotient(std_op.scale);
    return rep;
  }

  detail::SweepPlan plan(data, config.ties);
  const Eigen::Index p = data.p();
  auto eval = [&](const Vector& b, bool grad, bool hess) {
    return config.compensated
               ? detail::full_sweep<true>(b, data, plan, grad, hess)
               : detail::full_sweep<false>(b, data, plan, grad, hess);
  };

  auto check_condition = [](const Matrix& info) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(info, Eigen::EigenvaluesOnly);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    const double cond = emin > 0.0 ? emax / emin
                                   : std::numeric_limits<double>::infinity();
    if (!(emin > 0.0) || cond > 1e12)
      throw Error("non_identifiable",
                  "observed information is singular or ill-conditioned "
                  "(condition estimate " +
                      std::to_string(cond) + ")");
    return cond;
  };

  NewtonReport rep;
  Vector beta = Vector::Zero(p);
  FullLikelihood cur;  // likelihood state at the current beta
  for (int iter = 1; iter <= config.max_iter; ++iter) {
    cur = eval(beta, true, true);
    rep.iterations = iter;
    rep.condition = check_condition(cur.information);

    if (cur.gradient.lpNorm<Eigen::Infinity>() < config.tol) {
      rep.converged = true;
      break;
    }

    Vector step = cur.information.ldlt().solve(cur.gradient);
    double scale = 1.0;
    if (config.step_halving) {
      for (int h = 0; h < 30; ++h) {
        const double trial = eval(beta + scale * step, false, false).loglik;
        if (trial >= cur.loglik) break;
        scale *= 0.5;
      }
    }
    beta += scale * step;
    if ((scale * step).lpNorm<Eigen::Infinity>() < config.tol) {
      rep.converged = true;
      cur = eval(beta, true, true);
      rep.condition = check_condition(cur.information);
      break;
    }
  }
  if (!rep.converged) cur = eval(beta, true, true);

  rep.beta = beta;
  rep.loglik = cur.loglik;
  rep.observed_information = cur.information;
  const Matrix inv = cur.information.ldlt().solve(
      Matrix::Identity(p, p));
  rep.std_error = inv.diagonal().cwiseSqrt();
  return rep;
}

}  // namespace bigsurv
