#pragma once

#include "advnlg/generator.hpp"
#include "advnlg/gumbel.hpp"
#include "advnlg/tensor.hpp"

#include <span>
#include <vector>

namespace advnlg {

// Critic weights: shared embedding, forward/backward GRUs, batch norm over
// the concatenated final states, linear head. All parameters registered in
// the discriminator's own store (the shared embedding is not, so weight
// clipping never touches it).
struct DiscriminatorParams {
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor embedding;  // shared E
  GruCell forward_gru;
  GruCell backward_gru;
  Tensor bn_gamma;  // [2 d_h]
  Tensor bn_beta;   // [2 d_h]
  BatchNormState* bn_state = nullptr;  // owned by the store
  Tensor w_score;  // [2 d_h x 1]
  Tensor b_score;  // [1]
};

DiscriminatorParams make_discriminator(ParamStore& store, Tensor embedding,
                                       std::size_t hidden_dim, RngStream& rng);

// One input position: a plain token id (real data, or detached generated
// tokens) or a distribution row over the vocabulary (the straight-through
// path, which embeds differentiably).
struct TokenRepr {
  int id = -1;
  Tensor rows;  // [1 x V] when set

  static TokenRepr from_id(int id) { return {id, {}}; }
  static TokenRepr from_rows(Tensor rows) { return {-1, std::move(rows)}; }
  bool is_id() const { return !rows.defined(); }
};

using SequenceRepr = std::vector<TokenRepr>;

SequenceRepr sequence_from_ids(std::span<const int> ids);
// BOS id followed by the rollout's straight-through rows (EOS row included
// when the rollout produced it).
SequenceRepr sequence_from_rollout(const Rollout& rollout);

// Critic scores for a batch of sequences. PAD ids are dropped before the
// GRUs run, so the forward state is taken at the last real token and the
// backward state at the first. Train mode uses batch statistics in the
// batch-norm layer and requires at least two sequences.
Tensor score_batch(const DiscriminatorParams& params,
                   std::span<const SequenceRepr> batch, bool train);

// Scores real and generated sequences in one normalization batch and
// returns (real scores, fake scores). The critic ends in batch norm, so
// normalizing the sides separately would pin both batch means to the same
// constant and zero out the mean objective; a shared batch keeps the
// real-vs-fake difference (and its gradient) alive.
std::pair<Tensor, Tensor> score_real_fake(const DiscriminatorParams& params,
                                          std::span<const SequenceRepr> real,
                                          std::span<const SequenceRepr> fake,
                                          bool train);

// Eq. 2 inner objective: the critic maximizes mean(real) - mean(fake);
// returned as the loss to minimize (its negation).
Tensor wgan_d_loss(const Tensor& scores_real, const Tensor& scores_fake);

// Generator side: minimize -mean(fake scores).
Tensor wgan_g_loss(const Tensor& scores_fake);

}  // namespace advnlg
