#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace bigsurv {

/// splitmix64 finalizer; used to derive independent seed substreams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic substream seed from a master seed and a path of tags
/// (e.g. {kPartition, epoch}). Order-sensitive.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v));
  return h;
}

/// mt19937_64 wrapper with hand-rolled draws so that sequences are identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Unbiased integer in [0, bound) via rejection on the high bits.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % bound;
  }

  /// Exponential with the given mean; strictly positive draws.
  double exponential_mean(double mean) {
    return -mean * std::log1p(-uniform01());
  }

  bool bernoulli(double pr) { return uniform01() < pr; }

  /// Fisher–Yates shuffle.
  template <class T>
  void shuffle(std::span<T> v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices sampled from {0..n-1} \ {exclude}, appended to `out`
  /// in draw order. Requires k <= n - 1.
  void sample_excluding(std::size_t n, std::size_t k, std::size_t exclude,
                        std::vector<int>& out) {
    const std::size_t start = out.size();
    while (out.size() - start < k) {
      std::size_t v = static_cast<std::size_t>(below(n - 1));
      if (v >= exclude) ++v;  // map around the excluded index
      bool dup = false;
      for (std::size_t t = start; t < out.size(); ++t)
        if (out[t] == static_cast<int>(v)) {
          dup = true;
          break;
        }
      if (!dup) out.push_back(static_cast<int>(v));
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace bigsurv
