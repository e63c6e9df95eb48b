#pragma once

#include "advnlg/rng.hpp"
#include "advnlg/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace advnlg {

// Gate weights of a single GRU cell. Inputs are [1 x input_dim] rows, hidden
// states [1 x hidden_dim].
struct GruCell {
  Tensor w_update, u_update, b_update;
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

GruCell make_gru(ParamStore& store, const std::string& prefix,
                 std::size_t input_dim, std::size_t hidden_dim, RngStream& rng);

Tensor gru_step(const GruCell& cell, const Tensor& x, const Tensor& h_prev);

// Encoder-decoder weights. The embedding matrix is shared with the
// discriminator; the decoder input is the token embedding concatenated with
// the attention context, hence its input width d_emb + d_h.
struct GeneratorParams {
  std::size_t vocab_size = 0;
  std::size_t emb_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor embedding;  // [vocab x d_emb], shared
  GruCell encoder;
  GruCell decoder;
  Tensor w_out;  // [d_h x vocab]
  Tensor b_out;  // [vocab]
};

GeneratorParams make_generator(ParamStore& store, Tensor embedding,
                               std::size_t hidden_dim, RngStream& rng);

struct DecoderState {
  Tensor hidden;          // [1 x d_h]
  Tensor encoder_states;  // [m x d_h]
};

struct EncodeResult {
  Tensor states;  // [m x d_h]
  Tensor final;   // [1 x d_h]
};

// Dropout on token embeddings during teacher forcing; inactive when rng is
// null or rate is zero.
struct TrainNoise {
  double dropout = 0.0;
  RngStream* rng = nullptr;
};

// Unidirectional GRU over the embedded input from a zero initial state.
EncodeResult encode(const GeneratorParams& params, std::span<const int> input_ids,
                    const TrainNoise& noise = {});

// Dot-product attention: weights = softmax(encoder_states . hidden),
// context = weighted sum of encoder states.
Tensor attend(const Tensor& decoder_hidden, const Tensor& encoder_states);
// Same, exposing the weights (tests and inspection).
std::pair<Tensor, Tensor> attend_with_weights(const Tensor& decoder_hidden,
                                              const Tensor& encoder_states);

struct DecodeStepResult {
  Tensor probs;  // [1 x vocab]
  DecoderState state;
};

// One decoder step from a previous-token id or a relaxed distribution row
// over the vocabulary (the straight-through path).
DecodeStepResult decode_step(const GeneratorParams& params, int prev_token,
                             const DecoderState& state,
                             const TrainNoise& noise = {});
DecodeStepResult decode_step(const GeneratorParams& params, const Tensor& prev_rows,
                             const DecoderState& state,
                             const TrainNoise& noise = {});

// Per-sequence cross-entropy: the decoder consumes gold tokens
// target[0..n-2] and is scored against target[1..n-1]; returns the
// unnormalized sum of per-step negative log-likelihoods.
Tensor teacher_forced_loss(const GeneratorParams& params,
                           std::span<const int> input_ids,
                           std::span<const int> target_ids,
                           const TrainNoise& noise = {});

// Sum of -log p_t[gold_t] over aligned steps (the loss core, also used by
// tests with hand-set distributions).
Tensor nll_sum(std::span<const Tensor> step_probs, std::span<const int> gold);

// Argmax with ties broken toward the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

// Greedy decoding from BOS: feeds back the argmax token, stops at EOS or
// max_len generated tokens. Returns the sequence without BOS, including the
// terminal EOS when produced.
std::vector<int> greedy_decode(const GeneratorParams& params,
                               std::span<const int> input_ids, std::size_t max_len);

struct ScoredSequence {
  std::vector<int> tokens;  // without BOS, EOS included when produced
  double sum_logprob = 0.0;
  double score = 0.0;  // normalized when length_norm is on
};

// Length-normalized beam search. Finished hypotheses retire at EOS; live ones
// truncate at max_len. Returns at most `width` sequences, best first.
std::vector<ScoredSequence> beam_decode(const GeneratorParams& params,
                                        std::span<const int> input_ids,
                                        std::size_t width, std::size_t max_len,
                                        bool length_norm = true);

}  // namespace advnlg
