#pragma once

#include "advnlg/config.hpp"
#include "advnlg/corpus.hpp"
#include "advnlg/eval.hpp"
#include "advnlg/trainer.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace advnlg {

inline constexpr const char* kToolVersion = "0.1.0";

// One MR string per generation input: plain text (one MR per line) or an
// e2e-csv file whose mr column is taken row by row.
std::vector<std::string> load_mr_inputs(const std::string& path);

// FNV-1a over the raw file bytes, rendered as hex.
std::string file_checksum(const std::string& path);

// ---- prepare ----------------------------------------------------------------

struct PrepareOptions {
  std::string input_path;
  CorpusFormat format = CorpusFormat::kE2eCsv;
  std::string out_dir;
  std::string policy_path;   // empty: E2E defaults
  double dev_fraction = 0.1; // 0: dev mirrors train
  std::size_t min_count = 1;
  bool force = false;
};

struct PrepareSummary {
  std::size_t entries = 0;
  std::size_t train_pairs = 0;
  std::size_t dev_pairs = 0;
  std::size_t audit_lines = 0;
};

// Writes train.jsonl, dev.jsonl, vocab.txt, policy.json, audit.txt, and a
// manifest into out_dir. The split is deterministic by MR-string hash when
// dev_fraction > 0.
PrepareSummary prepare_corpus(const PrepareOptions& opts);

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  std::string data_dir;
  std::string out_dir;
  std::string config_path;                       // empty: defaults
  std::map<std::string, std::string> overrides;  // config keys, e.g. mode
  bool force = false;
};

struct TrainSummary {
  TrainConfig config;
  std::size_t best_epoch = 0;
  double best_dev = 0.0;
  double final_dev = 0.0;
  double warmup_dev = 0.0;
  bool resumed_from_warmup = false;
  std::string out_dir;
};

// Applies overrides and the ADVNLG_SEED environment variable, writes the
// manifest before training, runs the schedule, and leaves a self-contained
// model directory (checkpoints, vocab copy, policy copy, model.meta,
// config.used, train.log, timing.log).
TrainSummary train_command(const TrainOptions& opts);

// ---- generate ---------------------------------------------------------------

struct GenerateOptions {
  std::string checkpoint;
  std::string input_path;
  std::string out_path;
  std::size_t beam = 10;
  std::string vocab_path;   // default: vocab.txt next to the checkpoint
  std::string meta_path;    // default: model.meta next to the checkpoint
  std::string policy_path;  // default: policy.json next to the checkpoint
  bool force = false;
};

// Writes one tab-separated line per input MR: the MR string, the
// relexicalized top hypothesis, and its normalized score.
std::size_t generate_command(const GenerateOptions& opts);

// ---- eval -------------------------------------------------------------------

struct EvalOptions {
  std::string predictions;
  std::string references;    // e2e-csv grouped by MR string
  std::string against;       // optional second predictions file
  std::string report_path;   // optional JSONL records output
  std::string policy_path;   // empty: E2E defaults
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 12345;
  bool force = false;
};

struct EvalSummary {
  EvalReport report;
  std::optional<double> p_value;  // set when `against` is given
};

EvalSummary eval_command(const EvalOptions& opts);

// ---- inspect-gradients --------------------------------------------------------

struct InspectOptions {
  std::string data_dir;
  std::string out_path;
  std::size_t draws = 100;
  std::map<std::string, std::string> overrides;  // config keys
  bool force = false;
};

struct GroupVariance {
  std::string name;
  double st_variance = 0.0;
  double rl_variance = 0.0;
};

struct InspectSummary {
  std::vector<GroupVariance> groups;
  double st_mean_variance = 0.0;
  double rl_mean_variance = 0.0;
  double st_frozen_repeat_variance = 0.0;  // same noise twice; exactly zero
};

// On a frozen batch with frozen parameters, draws the adversarial generator
// gradient repeatedly under the straight-through and REINFORCE estimators
// and reports per-parameter-group variances (critic in inference mode so
// each draw sees the identical scoring function).
InspectSummary inspect_gradients_command(const InspectOptions& opts);

}  // namespace advnlg
