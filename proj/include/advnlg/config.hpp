#pragma once

#include "advnlg/errors.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace advnlg {

enum class TrainMode { kAdvnlg, kRl, kNoAdv, kNoWarmup };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

// Every hyperparameter of the two-stage schedule. Defaults follow the
// training setup: lr 1e-3, batch 20, beam 10, clip 0.1, tau 0.1, two warmup
// epochs, five generator updates per critic update.
struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 20;
  std::size_t beam_width = 10;
  double clip_c = 0.1;
  double tau = 0.1;
  std::size_t warmup_epochs = 2;
  std::size_t gen_updates_per_disc = 5;
  double adv_weight = 1.0;
  std::size_t total_epochs = 10;
  std::uint64_t seed = 1;
  TrainMode mode = TrainMode::kAdvnlg;

  std::size_t emb_dim = 50;
  std::size_t hidden_dim = 128;
  double dropout = 0.25;
  std::size_t min_count = 1;
  bool st_forward_perturbed = false;  // paper-greedy forward by default
  bool beam_length_norm = true;
  double rollout_len_factor = 1.5;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  double baseline_decay = 0.95;

  void validate() const;

  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  static TrainConfig from_file(const std::string& path);
  void save(const std::string& path) const;
};

// Flat key=value files ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_kv_file(const std::string& path);
void write_kv_file(const std::string& path,
                   const std::map<std::string, std::string>& kv);

}  // namespace advnlg
