#pragma once

#include "advnlg/generator.hpp"
#include "advnlg/rng.hpp"
#include "advnlg/tensor.hpp"

#include <span>
#include <vector>

namespace advnlg {

// -log(-log(u)) with u clamped into [1e-12, 1-1e-12].
double gumbel_from_uniform(double u);

std::vector<double> sample_gumbel(std::size_t count, RngStream& rng);

// Gumbel-Softmax relaxation p' = softmax((log p + g) / tau). The temperature
// divides inside the exponent; zero entries of p are clamped to log -1e10 so
// they stay unselectable.
Tensor gumbel_softmax(const Tensor& probs, double tau, RngStream& rng);
Tensor gumbel_softmax_with_noise(const Tensor& probs, double tau,
                                 std::span<const double> noise);

// Forward token selection: argmax of the unperturbed distribution (greedy,
// the default) or of the Gumbel-perturbed logits (classic ST-GS).
enum class StForward { kGreedy, kPerturbedArgmax };

// One straight-through sample. `combined` carries the hard one-hot forward
// value and routes gradients through `relaxed`.
struct STSample {
  int token = -1;
  Tensor hard;      // constant one-hot [1 x V]
  Tensor relaxed;   // [1 x V]
  Tensor combined;  // straight_through(hard, relaxed)
  double tau = 0.0;
};

STSample straight_through(const Tensor& probs, double tau, RngStream& rng,
                          StForward mode = StForward::kGreedy);
STSample straight_through_with_noise(const Tensor& probs, double tau,
                                     std::span<const double> noise,
                                     StForward mode = StForward::kGreedy);

struct Rollout {
  std::vector<int> tokens;        // EOS included when produced
  std::vector<STSample> samples;  // one per generated token
};

// Autoregressive decode that feeds the previous hard token back into the
// decoder and records each step's straight-through sample for the
// discriminator path. Stops at EOS or after max_len tokens.
Rollout generate_rollout(const GeneratorParams& params,
                         std::span<const int> input_ids, double tau,
                         std::size_t max_len, RngStream& rng,
                         StForward mode = StForward::kGreedy);

}  // namespace advnlg
