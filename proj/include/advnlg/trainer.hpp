#pragma once

#include "advnlg/checkpoint.hpp"
#include "advnlg/config.hpp"
#include "advnlg/corpus.hpp"
#include "advnlg/discriminator.hpp"
#include "advnlg/eval.hpp"
#include "advnlg/generator.hpp"
#include "advnlg/gumbel.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace advnlg {

struct EncodedPair {
  std::vector<int> input;
  std::vector<int> target;
};

// Prepared corpus as the trainer consumes it. Dev entries sharing one MR
// string are grouped at evaluation time.
struct TrainingData {
  Vocabulary vocab;
  std::vector<StoredPair> train;
  std::vector<StoredPair> dev;
  std::vector<EncodedPair> train_ids;
  std::vector<EncodedPair> dev_ids;
  std::size_t max_target_tokens = 1;  // longest train target, BOS excluded
};

// Reads train.jsonl / dev.jsonl / vocab.txt from a prepared directory.
TrainingData load_training_data(const std::string& dir);
// In-memory variant (tests, toy corpora). Builds the vocabulary when
// min_count > 0, otherwise uses the one given.
TrainingData make_training_data(std::vector<StoredPair> train,
                                std::vector<StoredPair> dev,
                                std::size_t min_count);

// The three parameter groups: the shared embedding is updated by both
// players but owned by neither, so clipping the critic never touches it.
struct Model {
  ParamStore shared{"shared"};
  ParamStore gen{"gen"};
  ParamStore disc{"disc"};
  GeneratorParams G;
  DiscriminatorParams D;

  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
};

Model make_model(std::size_t vocab_size, const TrainConfig& cfg);

// One log line. Wall-clock timing deliberately lives in a separate file so
// identical runs produce byte-identical logs.
struct TrainRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // global update counter
  std::string stage;      // warmup | gen | disc | rl-gen | epoch-end | resumed
  std::optional<double> l_gen;
  std::optional<double> d_objective;
  std::optional<double> g_adv;
  std::optional<double> dev_bleu;
};

struct TrainLog {
  std::vector<TrainRecord> records;
};

void write_train_log(const std::string& path, const TrainLog& log);

// Position in the (gen_updates_per_disc + 1) cycle plus the REINFORCE
// baseline state.
struct AdvState {
  std::size_t cycle_position = 0;
  std::size_t gen_updates = 0;
  std::size_t disc_updates = 0;
  double baseline = 0.0;
  bool baseline_ready = false;
};

// Generated sequences are capped at rollout_len_factor times the longest
// training target, rounded up.
std::size_t rollout_cap(const TrainConfig& cfg, const TrainingData& data);

// One epoch of teacher-forced cross-entropy training (also the no-adv mode).
void warmup_epoch(const TrainConfig& cfg, const TrainingData& data, Model& model,
                  std::size_t epoch, TrainLog& log, std::size_t& step,
                  const std::string& dump_dir);

// One epoch of the joint stage: gen_updates_per_disc generator updates
// (cross entropy + adv_weight * WGAN generator loss over straight-through
// rollouts), then one critic update on real references versus fresh rollouts
// followed by weight clipping. Batches too small for batch norm are skipped.
void adversarial_epoch(const TrainConfig& cfg, const TrainingData& data,
                       Model& model, AdvState& state, std::size_t epoch,
                       TrainLog& log, std::size_t& step,
                       const std::string& dump_dir);

// Same cycle with the REINFORCE estimator: multinomial rollouts, critic
// score as the sequence-level reward against an EMA baseline.
void reinforce_epoch(const TrainConfig& cfg, const TrainingData& data,
                     Model& model, AdvState& state, std::size_t epoch,
                     TrainLog& log, std::size_t& step,
                     const std::string& dump_dir);

// Multinomial policy rollout with the per-step log-probabilities summed on
// the active tape (the REINFORCE surrogate).
struct PolicySample {
  std::vector<int> tokens;
  Tensor seq_logprob;
};

PolicySample sample_policy_rollout(const GeneratorParams& params,
                                   std::span<const int> input_ids,
                                   std::size_t max_len, RngStream& rng);

// Greedy-decode the dev set, relexicalize, and score corpus BLEU against the
// references grouped by MR string.
double evaluate_dev_bleu(const TrainConfig& cfg, const TrainingData& data,
                         const Model& model);

struct TrainHooks {
  // Test hook replacing dev evaluation; receives the 1-based epoch.
  std::function<double(std::size_t)> dev_score_override;
};

struct TrainResult {
  TrainLog log;
  std::size_t best_epoch = 0;  // 1-based
  double best_dev = 0.0;
  double final_dev = 0.0;
  double warmup_dev = 0.0;  // dev BLEU at the end of the warmup stage
  std::string warmup_checkpoint;
  std::string best_checkpoint;
  std::string final_checkpoint;
  bool resumed_from_warmup = false;
};

// Full schedule dispatch: advnlg = warmup then adversarial epochs; rl =
// warmup then REINFORCE epochs; no-adv = cross entropy throughout;
// no-warmup = adversarial from scratch. Evaluates dev BLEU each epoch and
// keeps the best checkpoint. An existing warmup checkpoint in out_dir is
// reused instead of retraining (determinism makes the resumed run identical
// to an uninterrupted one).
TrainResult run_training(const TrainConfig& cfg, const TrainingData& data,
                         const std::string& out_dir, const TrainHooks& hooks = {});

}  // namespace advnlg
