#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace advnlg {

// Splittable counter-based PRNG (SplitMix64 finalizer over a keyed counter).
//
// Streams derived with split() depend only on the parent key and the split
// arguments, never on how many values the parent has drawn. Per-purpose
// streams (init, batch order, gumbel noise per step, ...) therefore stay
// stable across resumed or partially re-run trainings.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  RngStream split(std::string_view label) const;
  RngStream split(std::uint64_t a, std::uint64_t b = 0) const;

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Uniform index in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  // Standard Gumbel: -log(-log(u)) with u clamped to [1e-12, 1-1e-12].
  double gumbel();

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  RngStream() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace advnlg
