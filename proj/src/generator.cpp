#include "advnlg/generator.hpp"

#include "advnlg/corpus.hpp"

#include <algorithm>
#include <cmath>

namespace advnlg {

GruCell make_gru(ParamStore& store, const std::string& prefix,
                 std::size_t input_dim, std::size_t hidden_dim, RngStream& rng) {
  GruCell c;
  c.input_dim = input_dim;
  c.hidden_dim = hidden_dim;
  c.w_update = store.add_xavier(prefix + ".w_update", input_dim, hidden_dim, rng);
  c.u_update = store.add_xavier(prefix + ".u_update", hidden_dim, hidden_dim, rng);
  c.b_update = store.add(prefix + ".b_update", {hidden_dim},
                         std::vector<double>(hidden_dim, 0.0));
  c.w_reset = store.add_xavier(prefix + ".w_reset", input_dim, hidden_dim, rng);
  c.u_reset = store.add_xavier(prefix + ".u_reset", hidden_dim, hidden_dim, rng);
  c.b_reset = store.add(prefix + ".b_reset", {hidden_dim},
                        std::vector<double>(hidden_dim, 0.0));
  c.w_cand = store.add_xavier(prefix + ".w_cand", input_dim, hidden_dim, rng);
  c.u_cand = store.add_xavier(prefix + ".u_cand", hidden_dim, hidden_dim, rng);
  c.b_cand = store.add(prefix + ".b_cand", {hidden_dim},
                       std::vector<double>(hidden_dim, 0.0));
  return c;
}

Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h_prev) {
  Tensor z = sigmoid(add(add(matmul(x, cell.w_update), matmul(h_prev, cell.u_update)),
                         cell.b_update));
  Tensor r = sigmoid(add(add(matmul(x, cell.w_reset), matmul(h_prev, cell.u_reset)),
                         cell.b_reset));
  Tensor cand = tanh(add(
      add(matmul(x, cell.w_cand), matmul(mul(r, h_prev), cell.u_cand)), cell.b_cand));
  return add(mul(add_scalar(neg(z), 1.0), h_prev), mul(z, cand));
}

GeneratorParams make_generator(ParamStore& store, Tensor embedding,
                               std::size_t hidden_dim, RngStream& rng) {
  GeneratorParams p;
  p.vocab_size = embedding.dim(0);
  p.emb_dim = embedding.dim(1);
  p.hidden_dim = hidden_dim;
  p.embedding = std::move(embedding);
  p.encoder = make_gru(store, "enc", p.emb_dim, hidden_dim, rng);
  p.decoder = make_gru(store, "dec", p.emb_dim + hidden_dim, hidden_dim, rng);
  p.w_out = store.add_xavier("w_out", hidden_dim, p.vocab_size, rng);
  p.b_out = store.add("b_out", {p.vocab_size},
                      std::vector<double>(p.vocab_size, 0.0));
  return p;
}

namespace {

Tensor embed_token(const GeneratorParams& params, int id, const TrainNoise& noise) {
  const int ids[1] = {id};
  Tensor e = embed(params.embedding, std::span<const int>(ids));
  if (noise.rng && noise.dropout > 0.0) {
    e = dropout(e, noise.dropout, *noise.rng, true);
  }
  return e;
}

}  // namespace

EncodeResult encode(const GeneratorParams& params, std::span<const int> input_ids,
                    const TrainNoise& noise) {
  if (input_ids.empty()) throw UsageError("encode: empty input sequence");
  Tensor h = Tensor::zeros({1, params.hidden_dim});
  std::vector<Tensor> states;
  states.reserve(input_ids.size());
  for (int id : input_ids) {
    h = gru_step(params.encoder, embed_token(params, id, noise), h);
    states.push_back(h);
  }
  return {stack_rows(states), h};
}

std::pair<Tensor, Tensor> attend_with_weights(const Tensor& decoder_hidden,
                                              const Tensor& encoder_states) {
  const std::size_t m = encoder_states.dim(0);
  const std::size_t d = encoder_states.dim(1);
  Tensor scores = matmul(encoder_states, reshape(decoder_hidden, {d, 1}));
  Tensor weights = softmax(reshape(scores, {1, m}));
  Tensor context = matmul(weights, encoder_states);
  return {context, weights};
}

Tensor attend(const Tensor& decoder_hidden, const Tensor& encoder_states) {
  return attend_with_weights(decoder_hidden, encoder_states).first;
}

namespace {

DecodeStepResult decode_from_embedding(const GeneratorParams& params,
                                       const Tensor& emb,
                                       const DecoderState& state) {
  Tensor context = attend(state.hidden, state.encoder_states);
  Tensor x = concat(emb, context);
  Tensor h = gru_step(params.decoder, x, state.hidden);
  Tensor logits = add(matmul(h, params.w_out), params.b_out);
  return {softmax(logits), {h, state.encoder_states}};
}

}  // namespace

DecodeStepResult decode_step(const GeneratorParams& params, int prev_token,
                             const DecoderState& state, const TrainNoise& noise) {
  return decode_from_embedding(params, embed_token(params, prev_token, noise), state);
}

DecodeStepResult decode_step(const GeneratorParams& params, const Tensor& prev_rows,
                             const DecoderState& state, const TrainNoise& noise) {
  Tensor e = embed(params.embedding, prev_rows);
  if (noise.rng && noise.dropout > 0.0) {
    e = dropout(e, noise.dropout, *noise.rng, true);
  }
  return decode_from_embedding(params, e, state);
}

Tensor nll_sum(std::span<const Tensor> step_probs, std::span<const int> gold) {
  if (step_probs.size() != gold.size() || gold.empty()) {
    throw UsageError("nll_sum: need equal nonempty probs and gold tokens");
  }
  Tensor total;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    Tensor term = neg(safe_log(pick(step_probs[t], static_cast<std::size_t>(gold[t]))));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor teacher_forced_loss(const GeneratorParams& params,
                           std::span<const int> input_ids,
                           std::span<const int> target_ids,
                           const TrainNoise& noise) {
  if (target_ids.size() < 2) {
    throw UsageError("teacher_forced_loss: target must be BOS...EOS");
  }
  EncodeResult enc = encode(params, input_ids, noise);
  DecoderState state{enc.final, enc.states};
  std::vector<Tensor> probs;
  std::vector<int> gold;
  probs.reserve(target_ids.size() - 1);
  for (std::size_t t = 0; t + 1 < target_ids.size(); ++t) {
    DecodeStepResult step = decode_step(params, target_ids[t], state, noise);
    probs.push_back(step.probs);
    gold.push_back(target_ids[t + 1]);
    state = step.state;
  }
  return nll_sum(probs, gold);
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<int> greedy_decode(const GeneratorParams& params,
                               std::span<const int> input_ids, std::size_t max_len) {
  if (max_len < 1) throw UsageError("greedy_decode: max_len must be >= 1");
  ScopedNoTape no_tape;
  EncodeResult enc = encode(params, input_ids);
  DecoderState state{enc.final, enc.states};
  std::vector<int> out;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecodeStepResult step = decode_step(params, prev, state);
    const int tok = static_cast<int>(argmax_lowest(step.probs.values()));
    out.push_back(tok);
    if (tok == Vocabulary::kEos) break;
    prev = tok;
    state = step.state;
  }
  return out;
}

std::vector<ScoredSequence> beam_decode(const GeneratorParams& params,
                                        std::span<const int> input_ids,
                                        std::size_t width, std::size_t max_len,
                                        bool length_norm) {
  if (width < 1) throw UsageError("beam_decode: width must be >= 1");
  if (max_len < 1) throw UsageError("beam_decode: max_len must be >= 1");
  ScopedNoTape no_tape;

  struct Hyp {
    std::vector<int> tokens;
    double sum = 0.0;
    DecoderState state;
    int prev = Vocabulary::kBos;
  };
  auto normalized = [length_norm](double sum, std::size_t len) {
    return length_norm ? sum / static_cast<double>(len) : sum;
  };

  EncodeResult enc = encode(params, input_ids);
  std::vector<Hyp> live;
  live.push_back({{}, 0.0, {enc.final, enc.states}, Vocabulary::kBos});
  std::vector<ScoredSequence> finished;

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    struct Cand {
      std::size_t hyp;
      int token;
      double sum;
    };
    std::vector<Cand> cands;
    std::vector<DecoderState> new_states(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      DecodeStepResult step = decode_step(params, live[h].prev, live[h].state);
      new_states[h] = step.state;
      const auto& p = step.probs.values();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double lp = p[j] > 0.0 ? std::log(p[j]) : -1e10;
        cands.push_back({h, static_cast<int>(j), live[h].sum + lp});
      }
    }
    // All live hypotheses share one length, so ranking by sum is ranking by
    // normalized score; ties resolve toward earlier hyp then lower token id.
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.sum > b.sum;
    });
    if (cands.size() > width) cands.resize(width);

    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      std::vector<int> toks = live[c.hyp].tokens;
      toks.push_back(c.token);
      if (c.token == Vocabulary::kEos) {
        finished.push_back(
            {std::move(toks), c.sum, normalized(c.sum, live[c.hyp].tokens.size() + 1)});
      } else {
        next.push_back({std::move(toks), c.sum, new_states[c.hyp], c.token});
      }
    }
    live = std::move(next);
  }
  for (Hyp& h : live) {
    if (h.tokens.empty()) continue;
    finished.push_back({h.tokens, h.sum, normalized(h.sum, h.tokens.size())});
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const ScoredSequence& a, const ScoredSequence& b) {
                     return a.score > b.score;
                   });
  if (finished.size() > width) finished.resize(width);
  return finished;
}

}  // namespace advnlg
