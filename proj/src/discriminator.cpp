#include "advnlg/discriminator.hpp"

#include "advnlg/corpus.hpp"

#include <algorithm>

namespace advnlg {

DiscriminatorParams make_discriminator(ParamStore& store, Tensor embedding,
                                       std::size_t hidden_dim, RngStream& rng) {
  DiscriminatorParams p;
  p.vocab_size = embedding.dim(0);
  p.emb_dim = embedding.dim(1);
  p.hidden_dim = hidden_dim;
  p.embedding = std::move(embedding);
  p.forward_gru = make_gru(store, "fwd", p.emb_dim, hidden_dim, rng);
  p.backward_gru = make_gru(store, "bwd", p.emb_dim, hidden_dim, rng);
  const std::size_t features = 2 * hidden_dim;
  p.bn_gamma = store.add("bn_gamma", {features}, std::vector<double>(features, 1.0));
  p.bn_beta = store.add("bn_beta", {features}, std::vector<double>(features, 0.0));
  p.bn_state = &store.add_batch_norm_state("bn", features);
  p.w_score = store.add_xavier("w_score", features, 1, rng);
  p.b_score = store.add("b_score", {1}, {0.0});
  return p;
}

SequenceRepr sequence_from_ids(std::span<const int> ids) {
  SequenceRepr out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(TokenRepr::from_id(id));
  return out;
}

SequenceRepr sequence_from_rollout(const Rollout& rollout) {
  SequenceRepr out;
  out.reserve(rollout.samples.size() + 1);
  out.push_back(TokenRepr::from_id(Vocabulary::kBos));
  for (const STSample& s : rollout.samples) {
    out.push_back(TokenRepr::from_rows(s.combined));
  }
  return out;
}

namespace {

std::vector<Tensor> embed_sequence(const DiscriminatorParams& params,
                                   const SequenceRepr& seq) {
  std::vector<Tensor> embs;
  embs.reserve(seq.size());
  for (const TokenRepr& tok : seq) {
    if (tok.is_id()) {
      if (tok.id == Vocabulary::kPad) continue;  // padding never reaches the GRUs
      const int ids[1] = {tok.id};
      embs.push_back(embed(params.embedding, std::span<const int>(ids)));
    } else {
      embs.push_back(embed(params.embedding, tok.rows));
    }
  }
  return embs;
}

Tensor run_gru(const GruCell& cell, std::span<const Tensor> embs, bool reversed) {
  Tensor h = Tensor::zeros({1, cell.hidden_dim});
  if (!reversed) {
    for (const Tensor& e : embs) h = gru_step(cell, e, h);
  } else {
    for (std::size_t i = embs.size(); i > 0; --i) h = gru_step(cell, embs[i - 1], h);
  }
  return h;
}

}  // namespace

Tensor score_batch(const DiscriminatorParams& params,
                   std::span<const SequenceRepr> batch, bool train) {
  if (batch.empty()) throw UsageError("score_batch: empty batch");
  if (train && batch.size() < 2) {
    throw ConfigError("score_batch: train mode requires batch size >= 2");
  }
  std::vector<Tensor> finals;
  finals.reserve(batch.size());
  for (const SequenceRepr& seq : batch) {
    std::vector<Tensor> embs = embed_sequence(params, seq);
    if (embs.empty()) throw UsageError("score_batch: sequence with no real tokens");
    Tensor h_fwd = run_gru(params.forward_gru, embs, false);
    Tensor h_bwd = run_gru(params.backward_gru, embs, true);
    finals.push_back(concat(h_fwd, h_bwd));
  }
  Tensor h = stack_rows(finals);
  Tensor r = batch_norm(h, params.bn_gamma, params.bn_beta, *params.bn_state, train);
  Tensor scores = add(matmul(r, params.w_score), params.b_score);
  return reshape(scores, {batch.size()});
}

std::pair<Tensor, Tensor> score_real_fake(const DiscriminatorParams& params,
                                          std::span<const SequenceRepr> real,
                                          std::span<const SequenceRepr> fake,
                                          bool train) {
  if (real.empty() || fake.empty()) {
    throw UsageError("score_real_fake: both sides must be nonempty");
  }
  std::vector<SequenceRepr> combined(real.begin(), real.end());
  combined.insert(combined.end(), fake.begin(), fake.end());
  Tensor scores = score_batch(params, combined, train);
  return {narrow(scores, 0, real.size()), narrow(scores, real.size(), fake.size())};
}

Tensor wgan_d_loss(const Tensor& scores_real, const Tensor& scores_fake) {
  if (scores_real.size() == 0 || scores_fake.size() == 0) {
    throw UsageError("wgan_d_loss: empty score vector");
  }
  return neg(sub(mean(scores_real), mean(scores_fake)));
}

Tensor wgan_g_loss(const Tensor& scores_fake) {
  if (scores_fake.size() == 0) throw UsageError("wgan_g_loss: empty score vector");
  return neg(mean(scores_fake));
}

}  // namespace advnlg
