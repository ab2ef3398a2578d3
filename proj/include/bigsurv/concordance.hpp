#pragma once

#include <vector>

#include "bigsurv/types.hpp"

namespace bigsurv {

/// Harrell-style concordance index of the linear predictor beta'x.
///
/// A pair is comparable when the strictly smaller follow-up time is an event
/// and, under left truncation, the longer-lived subject was already enrolled
/// at that event time. Higher predictor should fail earlier; ties in the
/// predictor score 1/2. Pairs cost O(n^2); fine for the sample sizes where a
/// full dataset is held in memory.
inline double concordance_index(const Vector& beta, const Dataset& data) {
  const std::size_t n = data.size();
  std::vector<double> eta(n);
  for (std::size_t i = 0; i < n; ++i)
    eta[i] = beta.dot(data[i].covariates);

  double credit = 0.0;
  long comparable = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (data[i].time == data[j].time) continue;
      const std::size_t a = data[i].time < data[j].time ? i : j;
      const std::size_t b = a == i ? j : i;
      if (data[a].status != 1) continue;
      if (data[b].entry > data[a].time) continue;  // never jointly at risk
      ++comparable;
      if (eta[a] > eta[b])
        credit += 1.0;
      else if (eta[a] == eta[b])
        credit += 0.5;
    }
  }
  if (comparable == 0)
    throw Error("undefined", "concordance undefined: no comparable pairs");
  return credit / static_cast<double>(comparable);
}

}  // namespace bigsurv
