#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bigsurv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Coefficient vectors are plain dense vectors of length p.
using Coefficients = Vector;

/// Error with a stable machine-readable code, surfaced as JSON by the CLI.
/// Codes in use: "config", "validation", "parse", "numeric",
/// "non_identifiable", "undefined", "contract", "ties", "io".
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// One observation: follow-up time, event indicator, optional left-truncation
/// entry time (0 = enrolled at origin), and the covariate vector.
struct Subject {
  double time = 0.0;
  int status = 0;  // 1 = event, 0 = censored
  double entry = 0.0;
  Vector covariates;
};

inline void validate_subject(const Subject& s, Eigen::Index expect_p,
                             std::size_t row = 0) {
  const std::string where =
      row ? " (subject " + std::to_string(row) + ")" : std::string();
  if (!std::isfinite(s.time) || s.time < 0.0)
    throw Error("validation", "time must be finite and nonnegative" + where);
  if (s.status != 0 && s.status != 1)
    throw Error("validation", "status must be 0 or 1" + where);
  if (!std::isfinite(s.entry) || s.entry < 0.0)
    throw Error("validation", "entry must be finite and nonnegative" + where);
  if (s.entry > 0.0 && !(s.entry < s.time))
    throw Error("validation", "entry time must precede follow-up time" + where);
  if (expect_p >= 0 && s.covariates.size() != expect_p)
    throw Error("validation", "covariate length mismatch" + where);
  if (!s.covariates.allFinite())
    throw Error("validation", "covariates must be finite" + where);
}

/// Immutable-after-load ordered collection of subjects with column metadata.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<Subject> subjects,
                   std::vector<std::string> names = {})
      : names_(std::move(names)) {
    subjects_.reserve(subjects.size());
    for (auto& s : subjects) add(std::move(s));
  }

  void add(Subject s) {
    if (p_ < 0) p_ = s.covariates.size();
    validate_subject(s, p_, subjects_.size() + 1);
    subjects_.push_back(std::move(s));
  }

  std::size_t size() const { return subjects_.size(); }
  Eigen::Index p() const { return p_ < 0 ? 0 : p_; }

  const Subject& operator[](std::size_t i) const { return subjects_[i]; }
  const std::vector<Subject>& subjects() const { return subjects_; }

  const std::vector<std::string>& names() const { return names_; }
  void set_names(std::vector<std::string> names) { names_ = std::move(names); }

  /// Covariate label for column j ("x<j+1>" when unnamed).
  std::string name(Eigen::Index j) const {
    if (j < static_cast<Eigen::Index>(names_.size())) return names_[j];
    return "x" + std::to_string(j + 1);
  }

 private:
  std::vector<Subject> subjects_;
  Eigen::Index p_ = -1;
  std::vector<std::string> names_;
};

/// Index set of s subjects forming one partial-likelihood kernel evaluation.
struct StratumView {
  std::vector<int> indices;

  StratumView() = default;
  explicit StratumView(std::vector<int> idx) : indices(std::move(idx)) {}

  std::span<const int> span() const { return indices; }
  int size() const { return static_cast<int>(indices.size()); }
};

enum class TiesPolicy {
  breslow,  // tied events share the full risk set
  error,    // refuse datasets with tied event times
};

inline TiesPolicy ties_policy_from_string(const std::string& s) {
  if (s == "breslow") return TiesPolicy::breslow;
  if (s == "error") return TiesPolicy::error;
  throw Error("config", "unknown ties policy '" + s + "'");
}

inline const char* to_string(TiesPolicy t) {
  return t == TiesPolicy::breslow ? "breslow" : "error";
}

/// Pull-based subject source. Implementations must yield subjects in a
/// deterministic order for a fixed configuration.
class SubjectStream {
 public:
  virtual ~SubjectStream() = default;
  /// Fills `out` and returns true, or returns false at end of stream.
  virtual bool next(Subject& out) = 0;
};

/// In-memory stream over a dataset (optionally through an index order).
class VectorStream : public SubjectStream {
 public:
  explicit VectorStream(const Dataset& data) : data_(data) {}
  VectorStream(const Dataset& data, std::vector<int> order)
      : data_(data), order_(std::move(order)) {}

  bool next(Subject& out) override {
    const std::size_t n = order_.empty() ? data_.size() : order_.size();
    if (pos_ >= n) return false;
    const std::size_t i = order_.empty() ? pos_ : static_cast<std::size_t>(order_[pos_]);
    out = data_[i];
    ++pos_;
    return true;
  }

 private:
  const Dataset& data_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
};

}  // namespace bigsurv
