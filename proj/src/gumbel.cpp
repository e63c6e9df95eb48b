#include "advnlg/gumbel.hpp"

#include "advnlg/corpus.hpp"

#include <algorithm>
#include <cmath>

namespace advnlg {

double gumbel_from_uniform(double u) {
  u = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

std::vector<double> sample_gumbel(std::size_t count, RngStream& rng) {
  if (count < 1) throw UsageError("sample_gumbel: count must be >= 1");
  std::vector<double> g(count);
  for (double& v : g) v = gumbel_from_uniform(rng.uniform());
  return g;
}

Tensor gumbel_softmax_with_noise(const Tensor& probs, double tau,
                                 std::span<const double> noise) {
  if (!(tau > 0.0)) throw ConfigError("gumbel_softmax: tau must be positive");
  if (noise.size() != probs.size()) {
    throw DimensionError("gumbel_softmax: noise length " +
                         std::to_string(noise.size()) + " does not match " +
                         shape_str(probs.shape()));
  }
  Tensor g = Tensor::constant(probs.shape(),
                              std::vector<double>(noise.begin(), noise.end()));
  return softmax(scale(add(safe_log(probs), g), 1.0 / tau));
}

Tensor gumbel_softmax(const Tensor& probs, double tau, RngStream& rng) {
  return gumbel_softmax_with_noise(probs, tau, sample_gumbel(probs.size(), rng));
}

STSample straight_through_with_noise(const Tensor& probs, double tau,
                                     std::span<const double> noise,
                                     StForward mode) {
  STSample s;
  s.tau = tau;
  s.relaxed = gumbel_softmax_with_noise(probs, tau, noise);
  if (mode == StForward::kGreedy) {
    s.token = static_cast<int>(argmax_lowest(probs.values()));
  } else {
    std::vector<double> perturbed(probs.size());
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      const double p = probs.values()[i];
      perturbed[i] = (p > 0.0 ? std::log(p) : -1e10) + noise[i];
    }
    s.token = static_cast<int>(argmax_lowest(perturbed));
  }
  std::vector<double> onehot(probs.size(), 0.0);
  onehot[static_cast<std::size_t>(s.token)] = 1.0;
  s.hard = Tensor::constant(probs.shape(), std::move(onehot));
  s.combined = straight_through(s.hard, s.relaxed);
  return s;
}

STSample straight_through(const Tensor& probs, double tau, RngStream& rng,
                          StForward mode) {
  return straight_through_with_noise(probs, tau, sample_gumbel(probs.size(), rng),
                                     mode);
}

Rollout generate_rollout(const GeneratorParams& params,
                         std::span<const int> input_ids, double tau,
                         std::size_t max_len, RngStream& rng, StForward mode) {
  if (max_len < 1) throw UsageError("generate_rollout: max_len must be >= 1");
  Rollout out;
  EncodeResult enc = encode(params, input_ids);
  DecoderState state{enc.final, enc.states};
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecodeStepResult step = decode_step(params, prev, state);
    STSample sample = straight_through(step.probs, tau, rng, mode);
    out.tokens.push_back(sample.token);
    const int tok = sample.token;
    out.samples.push_back(std::move(sample));
    if (tok == Vocabulary::kEos) break;
    prev = tok;
    state = step.state;
  }
  return out;
}

}  // namespace advnlg
