#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bigsurv/parallel.hpp"
#include "bigsurv/rng.hpp"
#include "bigsurv/stratum_likelihood.hpp"
#include "bigsurv/types.hpp"

namespace bigsurv {

enum class Optimizer { plain, amsgrad };

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "plain") return Optimizer::plain;
  if (s == "amsgrad") return Optimizer::amsgrad;
  throw Error("config", "unknown optimizer '" + s + "'");
}

inline const char* to_string(Optimizer o) {
  return o == Optimizer::plain ? "plain" : "amsgrad";
}

struct SgdConfig {
  int strata_size = 20;
  int batch_size = 1;
  int epochs = 100;
  double lr_const = 0.12;  // gamma_m = lr_const / sqrt(m)
  Optimizer optimizer = Optimizer::amsgrad;
  bool average_iterates = true;
  std::uint64_t seed = 0;
  double amsgrad_beta1 = 0.9;
  double amsgrad_beta2 = 0.999;
  double amsgrad_eps = 1e-8;
  TiesPolicy ties = TiesPolicy::breslow;
  int shuffle_buffer = 65536;  // rows buffered per shuffle block in
                               // multi-epoch streaming; 0 disables shuffling

  void validate() const {
    if (strata_size < 2) throw Error("config", "strata size must be >= 2");
    if (batch_size < 1) throw Error("config", "batch size must be >= 1");
    if (epochs < 1) throw Error("config", "epochs must be >= 1");
    if (!(lr_const > 0)) throw Error("config", "lr const must be positive");
    if (!(amsgrad_beta1 >= 0 && amsgrad_beta1 < 1))
      throw Error("config", "amsgrad beta1 must be in [0,1)");
    if (!(amsgrad_beta2 >= 0 && amsgrad_beta2 < 1))
      throw Error("config", "amsgrad beta2 must be in [0,1)");
    if (!(amsgrad_eps > 0)) throw Error("config", "amsgrad eps must be positive");
    if (shuffle_buffer < 0)
      throw Error("config", "shuffle buffer must be nonnegative");
  }
};

/// Seed-derivation tags for the engine's independent substreams.
namespace seed_tag {
constexpr std::uint64_t partition = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t bootstrap_resample = 3;
constexpr std::uint64_t bootstrap_fit = 4;
constexpr std::uint64_t plugin_obs = 5;
constexpr std::uint64_t grid_dataset = 6;
constexpr std::uint64_t grid_fit = 7;
}  // namespace seed_tag

struct OptimizerState {
  long m = 0;  // completed gradient steps
  Vector beta_hat;
  Vector beta_tilde;
  Vector first_moment;
  Vector second_moment;
  Vector second_moment_max;

  explicit OptimizerState(Eigen::Index p)
      : beta_hat(Vector::Zero(p)),
        beta_tilde(Vector::Zero(p)),
        first_moment(Vector::Zero(p)),
        second_moment(Vector::Zero(p)),
        second_moment_max(Vector::Zero(p)) {}
};

/// One ascent step on the mean batch gradient of the log-partial-likelihood.
/// `grad` is the arithmetic mean over the batch's strata (Algorithm 2's
/// gamma/K scaling). Plain mode: beta += gamma_m * grad with
/// gamma_m = C/sqrt(m). AMSGrad mode: bias-uncorrected moments with the
/// max-corrected second moment.
inline void sgd_step(OptimizerState& state, const Vector& grad,
                     const SgdConfig& config) {
  if (!grad.allFinite())
    throw Error("numeric", "nonfinite gradient passed to sgd_step");
  const long m = state.m + 1;
  const double gamma = config.lr_const / std::sqrt(static_cast<double>(m));
  if (config.optimizer == Optimizer::plain) {
    state.beta_hat += gamma * grad;
  } else {
    const double b1 = config.amsgrad_beta1;
    const double b2 = config.amsgrad_beta2;
    state.first_moment = b1 * state.first_moment + (1.0 - b1) * grad;
    state.second_moment =
        b2 * state.second_moment + (1.0 - b2) * grad.cwiseProduct(grad);
    state.second_moment_max =
        state.second_moment_max.cwiseMax(state.second_moment);
    state.beta_hat.array() +=
        gamma * state.first_moment.array() /
        (state.second_moment_max.array().sqrt() + config.amsgrad_eps);
  }
  state.m = m;
}

/// Folds the current iterate into the running Polyak–Ruppert average:
/// beta_tilde(m) = beta_tilde(m-1) + (beta_hat(m) - beta_tilde(m-1)) / m.
inline void update_average(OptimizerState& state) {
  if (state.m < 1) throw Error("contract", "update_average before any step");
  state.beta_tilde += (state.beta_hat - state.beta_tilde) /
                      static_cast<double>(state.m);
}

/// Uniformly random permutation of 0..n-1 cut into floor(n/s) strata of
/// exactly s; the n mod s leftover subjects are dropped for the epoch.
class StrataPartition {
 public:
  StrataPartition(int n, int s, Rng& rng) : s_(s) {
    if (s < 2) throw Error("config", "strata size must be >= 2");
    if (n < s)
      throw Error("config", "need at least " + std::to_string(s) +
                                " subjects for strata of size " +
                                std::to_string(s));
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    rng.shuffle(std::span<int>(order_));
    count_ = static_cast<std::size_t>(n / s);
  }

  std::size_t count() const { return count_; }
  int stratum_size() const { return s_; }
  int dropped() const { return static_cast<int>(order_.size()) -
                               static_cast<int>(count_) * s_; }

  std::span<const int> stratum(std::size_t k) const {
    return std::span<const int>(order_).subspan(k * s_, s_);
  }

  StratumView view(std::size_t k) const {
    auto sp = stratum(k);
    return StratumView(std::vector<int>(sp.begin(), sp.end()));
  }

 private:
  std::vector<int> order_;
  int s_ = 0;
  std::size_t count_ = 0;
};

inline StrataPartition partition_strata(int n, int s, Rng& rng) {
  return StrataPartition(n, s, rng);
}

struct FitReport {
  Vector beta_hat;    // last iterate
  Vector beta_tilde;  // running average (equals beta_hat when averaging off)
  std::vector<std::string> names;
  long steps = 0;
  int epochs_run = 0;
  long subjects_seen = 0;
  long dropped_subjects = 0;        // leftovers across epochs
  int partial_stratum_warnings = 0; // streams ending mid-stratum
  double seconds = 0.0;
  double final_grad_inf_norm = 0.0; // diagnostic: last batch-mean gradient
  std::uint64_t peak_rss_bytes = 0;
  SgdConfig config;
  std::optional<double> concordance;  // filled by callers that hold the data
};

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Shared per-batch step: mean gradient over the batch's strata, one
/// optimizer step, one averaging update.
class BatchStepper {
 public:
  BatchStepper(const SgdConfig& config, Eigen::Index p)
      : config_(config), state_(p), grad_sum_(Vector::Zero(p)) {}

  void run_batch(const Dataset& data,
                 const std::function<std::span<const int>(int)>& stratum_of,
                 int k_strata, const std::string& where) {
    grad_sum_.setZero();
    for (int k = 0; k < k_strata; ++k) {
      const auto stratum = stratum_of(k);
      const StratumKernel kernel = stratum_kernel(
          state_.beta_hat, stratum, data, false, config_.ties, scratch_);
      if (!kernel.gradient.allFinite()) {
        std::string subjects;
        for (int idx : stratum) subjects += std::to_string(idx) + " ";
        throw Error("numeric", "nonfinite stratum gradient at " + where +
                                   ", stratum " + std::to_string(k) +
                                   " (subjects " + subjects + ")");
      }
      grad_sum_ += kernel.gradient;
    }
    mean_grad_ = grad_sum_ / static_cast<double>(k_strata);
    sgd_step(state_, mean_grad_, config_);
    if (config_.average_iterates) update_average(state_);
  }

  OptimizerState& state() { return state_; }
  const Vector& last_mean_grad() const { return mean_grad_; }

 private:
  const SgdConfig& config_;
  OptimizerState state_;
  StratumScratch scratch_;
  Vector grad_sum_;
  Vector mean_grad_;
};

inline FitReport finalize(BatchStepper& stepper, const SgdConfig& config,
                          const Stopwatch& watch, FitReport rep) {
  rep.steps = stepper.state().m;
  rep.beta_hat = stepper.state().beta_hat;
  rep.beta_tilde = config.average_iterates ? stepper.state().beta_tilde
                                           : stepper.state().beta_hat;
  if (stepper.state().m > 0)
    rep.final_grad_inf_norm =
        stepper.last_mean_grad().lpNorm<Eigen::Infinity>();
  rep.seconds = watch.seconds();
  rep.peak_rss_bytes = peak_rss_bytes();
  rep.config = config;
  return rep;
}

/// One pass over a stream: consume s*K subjects per step. Returns leftover
/// subject count (partial batch strata are still used; only a final partial
/// stratum is discarded).
inline long stream_pass(SubjectStream& stream, const SgdConfig& config,
                        BatchStepper& stepper, long& subjects_seen) {
  const int s = config.strata_size;
  const int cap = s * config.batch_size;
  std::vector<Subject> buffer;
  buffer.reserve(cap);
  Subject subj;
  bool more = true;
  long leftover = 0;
  while (more) {
    buffer.clear();
    while (static_cast<int>(buffer.size()) < cap && (more = stream.next(subj)))
      buffer.push_back(subj);
    subjects_seen += static_cast<long>(buffer.size());
    const int full_strata = static_cast<int>(buffer.size()) / s;
    leftover += static_cast<long>(buffer.size()) - full_strata * s;
    if (full_strata == 0) continue;
    Dataset batch(std::vector<Subject>(buffer.begin(),
                                       buffer.begin() + full_strata * s));
    std::vector<int> idx(full_strata * s);
    std::iota(idx.begin(), idx.end(), 0);
    stepper.run_batch(
        batch,
        [&](int k) {
          return std::span<const int>(idx).subspan(k * s, s);
        },
        full_strata, "stream step " + std::to_string(stepper.state().m + 1));
  }
  return leftover;
}

/// Re-yields one peeked subject ahead of the inner stream.
class PrependStream : public SubjectStream {
 public:
  PrependStream(Subject first, SubjectStream& inner)
      : first_(std::move(first)), inner_(inner) {}

  bool next(Subject& out) override {
    if (!used_) {
      out = first_;
      used_ = true;
      return true;
    }
    return inner_.next(out);
  }

 private:
  Subject first_;
  bool used_ = false;
  SubjectStream& inner_;
};

/// Yields blocks of `capacity` subjects in a per-block shuffled order.
class ShuffleBufferStream : public SubjectStream {
 public:
  ShuffleBufferStream(SubjectStream& inner, std::size_t capacity, Rng rng)
      : inner_(inner), capacity_(capacity), rng_(rng) {}

  bool next(Subject& out) override {
    if (pos_ >= buffer_.size()) {
      buffer_.clear();
      pos_ = 0;
      Subject subj;
      while (buffer_.size() < capacity_ && inner_.next(subj))
        buffer_.push_back(std::move(subj));
      if (buffer_.empty()) return false;
      rng_.shuffle(std::span<Subject>(buffer_));
    }
    out = buffer_[pos_++];
    return true;
  }

 private:
  SubjectStream& inner_;
  std::size_t capacity_;
  Rng rng_;
  std::vector<Subject> buffer_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Multi-epoch mini-batch fit over an in-memory dataset: each epoch draws a
/// fresh random partition into strata of size s, groups them into batches of
/// K, and takes one step per batch on the batch-mean gradient. The iterate
/// carries across epochs; the step counter m does not reset.
/// `initial_beta` overrides the zero initialization (bootstrap warm starts).
inline FitReport fit_epochs(const Dataset& data, const SgdConfig& config,
                            const Vector* initial_beta = nullptr) {
  config.validate();
  const int n = static_cast<int>(data.size());
  if (n < config.strata_size)
    throw Error("config", "n = " + std::to_string(n) +
                              " is smaller than one stratum (s = " +
                              std::to_string(config.strata_size) + ")");
  detail::Stopwatch watch;
  detail::BatchStepper stepper(config, data.p());
  if (initial_beta) {
    if (initial_beta->size() != data.p())
      throw Error("config", "initial beta length mismatch");
    stepper.state().beta_hat = *initial_beta;
  }

  FitReport rep;
  const int s = config.strata_size;
  const int K = config.batch_size;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, {seed_tag::partition,
                                      static_cast<std::uint64_t>(epoch)}));
    StrataPartition part(n, s, rng);
    const int n_batches = static_cast<int>(part.count()) / K;
    rep.dropped_subjects +=
        part.dropped() + (static_cast<int>(part.count()) - n_batches * K) * s;
    for (int b = 0; b < n_batches; ++b) {
      stepper.run_batch(
          data, [&](int k) { return part.stratum(b * K + k); }, K,
          "epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
    }
    rep.epochs_run = epoch;
    rep.subjects_seen += static_cast<long>(n_batches) * K * s;
  }
  rep.names = data.names();
  return detail::finalize(stepper, config, watch, std::move(rep));
}

/// Single-pass streaming fit: consumes s subjects per stratum in arrival
/// order, one step per batch of K strata, and never retains more than s*K
/// subjects. A final partial stratum is discarded with a warning count.
inline FitReport fit_streaming(SubjectStream& stream, const SgdConfig& config) {
  config.validate();
  detail::Stopwatch watch;
  Subject first;
  if (!stream.next(first)) throw Error("config", "empty subject stream");
  detail::BatchStepper stepper(config, first.covariates.size());
  detail::PrependStream whole(std::move(first), stream);

  FitReport rep;
  long seen = 0;
  const long leftover = detail::stream_pass(whole, config, stepper, seen);
  rep.subjects_seen = seen;
  rep.dropped_subjects = leftover;
  rep.partial_stratum_warnings = leftover > 0 ? 1 : 0;
  rep.epochs_run = 1;
  if (stepper.state().m == 0)
    throw Error("config", "stream ended before one full stratum (s = " +
                              std::to_string(config.strata_size) + ")");
  return detail::finalize(stepper, config, watch, std::move(rep));
}

/// Out-of-core multi-epoch fit: re-opens the stream once per epoch and
/// shuffles within blocks of config.shuffle_buffer rows (epoch-seeded), the
/// bounded-memory analogue of the per-epoch random partition.
inline FitReport fit_streaming_epochs(
    const std::function<std::unique_ptr<SubjectStream>()>& open_stream,
    const SgdConfig& config) {
  config.validate();
  detail::Stopwatch watch;
  std::unique_ptr<detail::BatchStepper> stepper;
  FitReport rep;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto raw = open_stream();
    Subject first;
    if (!raw->next(first)) {
      if (epoch == 1) throw Error("config", "empty subject stream");
      break;
    }
    if (!stepper)
      stepper = std::make_unique<detail::BatchStepper>(
          config, first.covariates.size());
    detail::PrependStream whole(std::move(first), *raw);

    long seen = 0;
    long leftover;
    if (config.shuffle_buffer > 0) {
      detail::ShuffleBufferStream shuffled(
          whole, static_cast<std::size_t>(config.shuffle_buffer),
          Rng(derive_seed(config.seed, {seed_tag::shuffle,
                                        static_cast<std::uint64_t>(epoch)})));
      leftover = detail::stream_pass(shuffled, config, *stepper, seen);
    } else {
      leftover = detail::stream_pass(whole, config, *stepper, seen);
    }
    rep.subjects_seen += seen;
    rep.dropped_subjects += leftover;
    if (leftover > 0) ++rep.partial_stratum_warnings;
    rep.epochs_run = epoch;
  }
  if (!stepper || stepper->state().m == 0)
    throw Error("config", "stream ended before one full stratum (s = " +
                              std::to_string(config.strata_size) + ")");
  return detail::finalize(*stepper, config, watch, std::move(rep));
}

}  // namespace bigsurv
