#include "advnlg/rng.hpp"

#include "advnlg/errors.hpp"

#include <cmath>

namespace advnlg {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) {
  key_ = mix64(mix64(seed + kGolden) ^ mix64(stream + 0xD1B54A32D192ED03ULL));
}

RngStream RngStream::split(std::string_view label) const {
  return split(fnv1a(label));
}

RngStream RngStream::split(std::uint64_t a, std::uint64_t b) const {
  RngStream child;
  child.key_ = mix64(key_ + mix64(a + kGolden) + mix64(b + 0x8CB92BA72F3D8DD7ULL));
  return child;
}

std::uint64_t RngStream::next_u64() {
  counter_ += kGolden;
  return mix64(key_ ^ mix64(counter_));
}

double RngStream::uniform() {
  // 53 random bits; nudge 0 up so the interval stays open.
  double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  if (u <= 0.0) u = 0x1.0p-53;
  return u;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw UsageError("RngStream::index: n must be positive");
  // Rejection-free for our purposes; bias is negligible at desk scale.
  return static_cast<std::size_t>(next_u64() % n);
}

double RngStream::gumbel() {
  double u = uniform();
  if (u < 1e-12) u = 1e-12;
  if (u > 1.0 - 1e-12) u = 1.0 - 1e-12;
  return -std::log(-std::log(u));
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = index(i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace advnlg
