#include "advnlg/trainer.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace advnlg {

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(const TrainConfig& cfg,
                                                    std::size_t n,
                                                    std::size_t epoch) {
  RngStream order = RngStream(cfg.seed).split("order").split(epoch);
  const std::vector<std::size_t> perm = order.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += cfg.batch_size) {
    const std::size_t end = std::min(n, i + cfg.batch_size);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::size_t batches_per_epoch(const TrainConfig& cfg, std::size_t n) {
  return (n + cfg.batch_size - 1) / cfg.batch_size;
}

Tensor batch_ce_loss(const TrainConfig& cfg, const TrainingData& data,
                     Model& model, std::span<const std::size_t> batch,
                     std::size_t epoch, std::size_t step) {
  RngStream drop = RngStream(cfg.seed).split("dropout").split(epoch, step);
  TrainNoise noise{cfg.dropout, cfg.dropout > 0.0 ? &drop : nullptr};
  Tensor total;
  for (std::size_t idx : batch) {
    const EncodedPair& pair = data.train_ids[idx];
    Tensor loss = teacher_forced_loss(model.G, pair.input, pair.target, noise);
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

void dump_and_abort(const std::string& dump_dir, const TrainingData& data,
                    std::span<const std::size_t> batch, std::size_t epoch,
                    std::size_t step, const std::string& stage,
                    const char* what, double value) {
  const std::string path = dump_dir + "/nan_dump.json";
  nlohmann::json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["stage"] = stage;
  j["quantity"] = what;
  j["value_is_nan"] = std::isnan(value);
  nlohmann::json mrs = nlohmann::json::array();
  for (std::size_t idx : batch) mrs.push_back(data.train[idx].mr_text);
  j["batch_mrs"] = mrs;
  std::ofstream out(path);
  if (out) out << j.dump(2) << "\n";
  throw NumericalAbort("non-finite " + std::string(what) + " at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step) +
                       "; diagnostics: " + path);
}

void check_finite(double v, const char* what, const std::string& dump_dir,
                  const TrainingData& data, std::span<const std::size_t> batch,
                  std::size_t epoch, std::size_t step, const std::string& stage) {
  if (!std::isfinite(v)) {
    dump_and_abort(dump_dir, data, batch, epoch, step, stage, what, v);
  }
}

void step_generator_side(const TrainConfig& cfg, Model& model) {
  model.disc.zero_grads();
  rmsprop_step(model.gen, cfg.lr, cfg.rms_decay, cfg.rms_eps);
  rmsprop_step(model.shared, cfg.lr, cfg.rms_decay, cfg.rms_eps);
}

void step_discriminator_side(const TrainConfig& cfg, Model& model) {
  model.gen.zero_grads();
  rmsprop_step(model.disc, cfg.lr, cfg.rms_decay, cfg.rms_eps);
  rmsprop_step(model.shared, cfg.lr, cfg.rms_decay, cfg.rms_eps);
  clip_weights(model.disc, cfg.clip_c);
  for (const std::string& name : model.disc.names()) {
    for (double v : model.disc.get(name).values()) {
      if (std::abs(v) > cfg.clip_c) {
        throw Error("internal: critic weight outside the clip ball after update");
      }
    }
  }
}

std::vector<int> detached_rollout_ids(const GeneratorParams& params,
                                      std::span<const int> input_ids,
                                      double tau, std::size_t max_len,
                                      RngStream& rng, StForward mode) {
  ScopedNoTape no_tape;
  Rollout roll = generate_rollout(params, input_ids, tau, max_len, rng, mode);
  std::vector<int> ids;
  ids.reserve(roll.tokens.size() + 1);
  ids.push_back(Vocabulary::kBos);
  ids.insert(ids.end(), roll.tokens.begin(), roll.tokens.end());
  return ids;
}

void discriminator_update(const TrainConfig& cfg, const TrainingData& data,
                          Model& model, AdvState& state,
                          std::span<const std::size_t> batch, std::size_t epoch,
                          TrainLog& log, std::size_t step, const std::string& stage,
                          const std::string& dump_dir, bool rl_sampling) {
  const std::uint64_t gen_hash = model.gen.values_hash();
  GradientTape tape;
  std::vector<SequenceRepr> real, fake;
  const std::size_t cap = rollout_cap(cfg, data);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    real.push_back(sequence_from_ids(data.train_ids[batch[i]].target));
    RngStream roll_rng = RngStream(cfg.seed).split("disc-fake").split(step, i);
    std::vector<int> ids;
    if (rl_sampling) {
      ScopedNoTape no_tape;
      PolicySample s = sample_policy_rollout(model.G, data.train_ids[batch[i]].input,
                                             cap, roll_rng);
      ids.push_back(Vocabulary::kBos);
      ids.insert(ids.end(), s.tokens.begin(), s.tokens.end());
    } else {
      ids = detached_rollout_ids(
          model.G, data.train_ids[batch[i]].input, cfg.tau, cap, roll_rng,
          cfg.st_forward_perturbed ? StForward::kPerturbedArgmax
                                   : StForward::kGreedy);
    }
    fake.push_back(sequence_from_ids(ids));
  }
  auto [scores_real, scores_fake] = score_real_fake(model.D, real, fake, true);
  Tensor loss = wgan_d_loss(scores_real, scores_fake);
  const double d_obj = -loss.value();
  check_finite(d_obj, "critic objective", dump_dir, data, batch, epoch, step, stage);
  tape.backward(loss);
  step_discriminator_side(cfg, model);
  if (model.gen.values_hash() != gen_hash) {
    throw Error("internal: generator parameters changed during a critic update");
  }
  ++state.disc_updates;
  TrainRecord rec;
  rec.epoch = epoch;
  rec.step = step;
  rec.stage = "disc";
  rec.d_objective = d_obj;
  log.records.push_back(std::move(rec));
}

}  // namespace

std::size_t rollout_cap(const TrainConfig& cfg, const TrainingData& data) {
  const double cap = cfg.rollout_len_factor *
                     static_cast<double>(std::max<std::size_t>(1, data.max_target_tokens));
  return static_cast<std::size_t>(std::ceil(cap));
}

void warmup_epoch(const TrainConfig& cfg, const TrainingData& data, Model& model,
                  std::size_t epoch, TrainLog& log, std::size_t& step,
                  const std::string& dump_dir) {
  const std::uint64_t disc_hash = model.disc.values_hash();
  for (const auto& batch : epoch_batches(cfg, data.train.size(), epoch)) {
    GradientTape tape;
    Tensor loss = batch_ce_loss(cfg, data, model, batch, epoch, step);
    const double l_gen = loss.value();
    check_finite(l_gen, "cross-entropy loss", dump_dir, data, batch, epoch, step,
                 "warmup");
    tape.backward(loss);
    step_generator_side(cfg, model);
    TrainRecord rec;
    rec.epoch = epoch;
    rec.step = step;
    rec.stage = "warmup";
    rec.l_gen = l_gen;
    log.records.push_back(std::move(rec));
    ++step;
  }
  if (model.disc.values_hash() != disc_hash) {
    throw Error("internal: critic parameters changed during warmup");
  }
}

void adversarial_epoch(const TrainConfig& cfg, const TrainingData& data,
                       Model& model, AdvState& state, std::size_t epoch,
                       TrainLog& log, std::size_t& step,
                       const std::string& dump_dir) {
  const std::size_t cap = rollout_cap(cfg, data);
  const StForward mode = cfg.st_forward_perturbed ? StForward::kPerturbedArgmax
                                                  : StForward::kGreedy;
  for (const auto& batch : epoch_batches(cfg, data.train.size(), epoch)) {
    if (batch.size() < 2) continue;  // batch norm needs two sequences
    if (state.cycle_position < cfg.gen_updates_per_disc) {
      const std::uint64_t disc_hash = model.disc.values_hash();
      GradientTape tape;
      Tensor ce = batch_ce_loss(cfg, data, model, batch, epoch, step);
      const double l_gen = ce.value();
      check_finite(l_gen, "cross-entropy loss", dump_dir, data, batch, epoch, step,
                   "gen");
      Tensor total = ce;
      std::optional<double> g_adv;
      if (cfg.adv_weight > 0.0) {
        std::vector<SequenceRepr> real, fake;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          real.push_back(sequence_from_ids(data.train_ids[batch[i]].target));
          RngStream roll_rng = RngStream(cfg.seed).split("gumbel").split(step, i);
          Rollout roll = generate_rollout(model.G, data.train_ids[batch[i]].input,
                                          cfg.tau, cap, roll_rng, mode);
          fake.push_back(sequence_from_rollout(roll));
        }
        auto [scores_real, scores_fake] = score_real_fake(model.D, real, fake, true);
        (void)scores_real;
        Tensor adv = wgan_g_loss(scores_fake);
        g_adv = adv.value();
        check_finite(*g_adv, "adversarial generator loss", dump_dir, data, batch,
                     epoch, step, "gen");
        total = add(ce, scale(adv, cfg.adv_weight));
      }
      tape.backward(total);
      step_generator_side(cfg, model);
      if (model.disc.values_hash() != disc_hash) {
        throw Error("internal: critic parameters changed during a generator update");
      }
      ++state.gen_updates;
      TrainRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.stage = "gen";
      rec.l_gen = l_gen;
      rec.g_adv = g_adv;
      log.records.push_back(std::move(rec));
    } else {
      discriminator_update(cfg, data, model, state, batch, epoch, log, step,
                           "disc", dump_dir, /*rl_sampling=*/false);
    }
    state.cycle_position = (state.cycle_position + 1) % (cfg.gen_updates_per_disc + 1);
    ++step;
  }
}

PolicySample sample_policy_rollout(const GeneratorParams& params,
                                   std::span<const int> input_ids,
                                   std::size_t max_len, RngStream& rng) {
  if (max_len < 1) throw UsageError("sample_policy_rollout: max_len must be >= 1");
  PolicySample out;
  EncodeResult enc = encode(params, input_ids);
  DecoderState state{enc.final, enc.states};
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    DecodeStepResult step = decode_step(params, prev, state);
    const auto& p = step.probs.values();
    const double u = rng.uniform();
    double cdf = 0.0;
    std::size_t choice = p.size() - 1;
    for (std::size_t j = 0; j < p.size(); ++j) {
      cdf += p[j];
      if (u <= cdf) {
        choice = j;
        break;
      }
    }
    Tensor logp = safe_log(pick(step.probs, choice));
    out.seq_logprob = out.seq_logprob.defined() ? add(out.seq_logprob, logp) : logp;
    out.tokens.push_back(static_cast<int>(choice));
    if (static_cast<int>(choice) == Vocabulary::kEos) break;
    prev = static_cast<int>(choice);
    state = step.state;
  }
  return out;
}

void reinforce_epoch(const TrainConfig& cfg, const TrainingData& data,
                     Model& model, AdvState& state, std::size_t epoch,
                     TrainLog& log, std::size_t& step,
                     const std::string& dump_dir) {
  const std::size_t cap = rollout_cap(cfg, data);
  for (const auto& batch : epoch_batches(cfg, data.train.size(), epoch)) {
    if (batch.size() < 2) continue;
    if (state.cycle_position < cfg.gen_updates_per_disc) {
      const std::uint64_t disc_hash = model.disc.values_hash();
      GradientTape tape;
      Tensor ce = batch_ce_loss(cfg, data, model, batch, epoch, step);
      const double l_gen = ce.value();
      check_finite(l_gen, "cross-entropy loss", dump_dir, data, batch, epoch, step,
                   "rl-gen");
      Tensor total = ce;
      std::optional<double> g_adv;
      if (cfg.adv_weight > 0.0) {
        std::vector<PolicySample> samples;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          RngStream rng = RngStream(cfg.seed).split("rl-sample").split(step, i);
          samples.push_back(sample_policy_rollout(
              model.G, data.train_ids[batch[i]].input, cap, rng));
        }
        std::vector<double> rewards(samples.size());
        {
          ScopedNoTape no_tape;
          std::vector<SequenceRepr> fake;
          for (const PolicySample& s : samples) {
            std::vector<int> ids{Vocabulary::kBos};
            ids.insert(ids.end(), s.tokens.begin(), s.tokens.end());
            fake.push_back(sequence_from_ids(ids));
          }
          Tensor scores = score_batch(model.D, fake, false);
          for (std::size_t i = 0; i < samples.size(); ++i) rewards[i] = scores.at(i);
        }
        double mean_reward = 0.0;
        for (double r : rewards) mean_reward += r;
        mean_reward /= static_cast<double>(rewards.size());
        if (!state.baseline_ready) {
          state.baseline = mean_reward;
          state.baseline_ready = true;
        }
        Tensor rl;
        for (std::size_t i = 0; i < samples.size(); ++i) {
          Tensor term = scale(samples[i].seq_logprob,
                              -(rewards[i] - state.baseline));
          rl = rl.defined() ? add(rl, term) : term;
        }
        rl = scale(rl, 1.0 / static_cast<double>(samples.size()));
        g_adv = rl.value();
        check_finite(*g_adv, "reinforce loss", dump_dir, data, batch, epoch, step,
                     "rl-gen");
        total = add(ce, scale(rl, cfg.adv_weight));
        state.baseline = cfg.baseline_decay * state.baseline +
                         (1.0 - cfg.baseline_decay) * mean_reward;
      }
      tape.backward(total);
      step_generator_side(cfg, model);
      if (model.disc.values_hash() != disc_hash) {
        throw Error("internal: critic parameters changed during a generator update");
      }
      ++state.gen_updates;
      TrainRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.stage = "rl-gen";
      rec.l_gen = l_gen;
      rec.g_adv = g_adv;
      log.records.push_back(std::move(rec));
    } else {
      discriminator_update(cfg, data, model, state, batch, epoch, log, step,
                           "disc", dump_dir, /*rl_sampling=*/true);
    }
    state.cycle_position = (state.cycle_position + 1) % (cfg.gen_updates_per_disc + 1);
    ++step;
  }
}

double evaluate_dev_bleu(const TrainConfig& cfg, const TrainingData& data,
                         const Model& model) {
  if (data.dev.empty()) return 0.0;
  const std::size_t cap = rollout_cap(cfg, data);
  // Group dev references by their raw MR string, first-appearance order.
  std::vector<std::vector<std::size_t>> groups;
  {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < data.dev.size(); ++i) {
      auto it = index.find(data.dev[i].mr_text);
      if (it == index.end()) {
        index.emplace(data.dev[i].mr_text, groups.size());
        groups.push_back({i});
      } else {
        groups[it->second].push_back(i);
      }
    }
  }
  std::vector<TokenSeq> hyps;
  std::vector<RefSet> refs;
  for (const auto& group : groups) {
    const StoredPair& first = data.dev[group.front()];
    std::vector<int> decoded =
        greedy_decode(model.G, data.dev_ids[group.front()].input, cap);
    std::vector<std::string> tokens = data.vocab.decode(decoded);
    hyps.push_back(tokenize(relexicalize(tokens, first.pair.substitutions)));
    RefSet set;
    for (std::size_t i : group) {
      set.push_back(tokenize(relexicalize(data.dev[i].pair.target_tokens,
                                          data.dev[i].pair.substitutions)));
    }
    refs.push_back(std::move(set));
  }
  return bleu4(hyps, refs).bleu;
}

void write_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write train log " + path);
  for (const TrainRecord& r : log.records) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["stage"] = r.stage;
    j["l_gen"] = r.l_gen ? nlohmann::json(*r.l_gen) : nlohmann::json(nullptr);
    j["d_objective"] =
        r.d_objective ? nlohmann::json(*r.d_objective) : nlohmann::json(nullptr);
    j["g_adv"] = r.g_adv ? nlohmann::json(*r.g_adv) : nlohmann::json(nullptr);
    j["dev_bleu"] = r.dev_bleu ? nlohmann::json(*r.dev_bleu) : nlohmann::json(nullptr);
    out << j.dump() << "\n";
  }
}

TrainingData make_training_data(std::vector<StoredPair> train,
                                std::vector<StoredPair> dev,
                                std::size_t min_count) {
  TrainingData data;
  data.train = std::move(train);
  data.dev = std::move(dev);
  std::vector<DelexicalizedPair> pairs;
  pairs.reserve(data.train.size());
  for (const auto& sp : data.train) pairs.push_back(sp.pair);
  data.vocab = build_vocab(pairs, min_count);
  auto encode_all = [&](const std::vector<StoredPair>& src) {
    std::vector<EncodedPair> out;
    out.reserve(src.size());
    for (const auto& sp : src) {
      out.push_back({data.vocab.encode(sp.pair.input_tokens),
                     data.vocab.encode(sp.pair.target_tokens)});
    }
    return out;
  };
  data.train_ids = encode_all(data.train);
  data.dev_ids = encode_all(data.dev);
  data.max_target_tokens = 1;
  for (const auto& sp : data.train) {
    data.max_target_tokens =
        std::max(data.max_target_tokens, sp.pair.target_tokens.size() - 1);
  }
  return data;
}

TrainingData load_training_data(const std::string& dir) {
  TrainingData data;
  data.vocab = Vocabulary::load(dir + "/vocab.txt");
  data.train = read_pairs_jsonl(dir + "/train.jsonl");
  data.dev = read_pairs_jsonl(dir + "/dev.jsonl");
  if (data.train.empty()) throw UsageError(dir + ": empty training split");
  auto encode_all = [&](const std::vector<StoredPair>& src) {
    std::vector<EncodedPair> out;
    out.reserve(src.size());
    for (const auto& sp : src) {
      out.push_back({data.vocab.encode(sp.pair.input_tokens),
                     data.vocab.encode(sp.pair.target_tokens)});
    }
    return out;
  };
  data.train_ids = encode_all(data.train);
  data.dev_ids = encode_all(data.dev);
  data.max_target_tokens = 1;
  for (const auto& sp : data.train) {
    data.max_target_tokens =
        std::max(data.max_target_tokens, sp.pair.target_tokens.size() - 1);
  }
  return data;
}

Model make_model(std::size_t vocab_size, const TrainConfig& cfg) {
  Model m;
  RngStream init = RngStream(cfg.seed).split("init");
  RngStream e_init = init.split("embedding");
  Tensor& e = m.shared.add_xavier("E", vocab_size, cfg.emb_dim, e_init);
  RngStream g_init = init.split("generator");
  m.G = make_generator(m.gen, e, cfg.hidden_dim, g_init);
  RngStream d_init = init.split("discriminator");
  m.D = make_discriminator(m.disc, e, cfg.hidden_dim, d_init);
  return m;
}

TrainResult run_training(const TrainConfig& cfg, const TrainingData& data,
                         const std::string& out_dir, const TrainHooks& hooks) {
  cfg.validate();
  if (data.train.empty()) throw UsageError("run_training: empty training corpus");
  fs::create_directories(out_dir);

  Model model = make_model(data.vocab.size(), cfg);
  TrainLog log;
  std::size_t step = 0;
  AdvState adv;
  TrainResult result;

  const std::string warmup_ckpt = out_dir + "/warmup.ckpt";
  const std::string best_ckpt = out_dir + "/best.ckpt";
  const std::string final_ckpt = out_dir + "/final.ckpt";
  const std::array<const ParamStore*, 3> cstores{&model.shared, &model.gen,
                                                 &model.disc};
  const std::array<ParamStore*, 3> stores{&model.shared, &model.gen, &model.disc};

  const bool has_adv_stage = cfg.mode != TrainMode::kNoAdv;
  std::size_t warmup_target = 0;
  switch (cfg.mode) {
    case TrainMode::kNoAdv: warmup_target = cfg.total_epochs; break;
    case TrainMode::kNoWarmup: warmup_target = 0; break;
    default: warmup_target = std::min(cfg.warmup_epochs, cfg.total_epochs);
  }

  auto dev_eval = [&](std::size_t epoch1) {
    return hooks.dev_score_override ? hooks.dev_score_override(epoch1)
                                    : evaluate_dev_bleu(cfg, data, model);
  };
  auto note_epoch = [&](std::size_t epoch1) {
    const double bleu = dev_eval(epoch1);
    TrainRecord rec;
    rec.epoch = epoch1;
    rec.step = step;
    rec.stage = "epoch-end";
    rec.dev_bleu = bleu;
    log.records.push_back(std::move(rec));
    if (result.best_epoch == 0 || bleu > result.best_dev) {
      result.best_dev = bleu;
      result.best_epoch = epoch1;
      save_checkpoint(best_ckpt, cstores);
    }
    result.final_dev = bleu;
  };

  std::vector<double> epoch_wall_ms;
  using Clock = std::chrono::steady_clock;

  std::size_t start_epoch = 0;  // completed epochs
  if (has_adv_stage && warmup_target > 0 && fs::exists(warmup_ckpt)) {
    load_checkpoint(warmup_ckpt, stores);
    start_epoch = warmup_target;
    step = warmup_target * batches_per_epoch(cfg, data.train.size());
    result.resumed_from_warmup = true;
    TrainRecord rec;
    rec.epoch = warmup_target;
    rec.step = step;
    rec.stage = "resumed";
    log.records.push_back(std::move(rec));
    result.warmup_dev = dev_eval(warmup_target);
    result.best_dev = result.warmup_dev;
    result.best_epoch = std::max<std::size_t>(warmup_target, 1);
    result.final_dev = result.warmup_dev;
    save_checkpoint(best_ckpt, cstores);
  }

  for (std::size_t e = start_epoch; e < warmup_target; ++e) {
    const auto t0 = Clock::now();
    warmup_epoch(cfg, data, model, e + 1, log, step, out_dir);
    epoch_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    note_epoch(e + 1);
  }
  if (has_adv_stage && warmup_target > 0 && !result.resumed_from_warmup) {
    save_checkpoint(warmup_ckpt, cstores);
    result.warmup_dev = result.final_dev;
  }
  result.warmup_checkpoint = (has_adv_stage && warmup_target > 0) ? warmup_ckpt : "";

  for (std::size_t e = std::max(start_epoch, warmup_target); e < cfg.total_epochs;
       ++e) {
    const auto t0 = Clock::now();
    if (cfg.mode == TrainMode::kRl) {
      reinforce_epoch(cfg, data, model, adv, e + 1, log, step, out_dir);
    } else {
      adversarial_epoch(cfg, data, model, adv, e + 1, log, step, out_dir);
    }
    epoch_wall_ms.push_back(
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    note_epoch(e + 1);
  }

  save_checkpoint(final_ckpt, cstores);
  write_train_log(out_dir + "/train.log", log);
  {
    std::ofstream timing(out_dir + "/timing.log");
    for (std::size_t i = 0; i < epoch_wall_ms.size(); ++i) {
      timing << "epoch " << (i + 1) << " wall_ms " << epoch_wall_ms[i] << "\n";
    }
  }
  result.best_checkpoint = best_ckpt;
  result.final_checkpoint = final_ckpt;
  result.log = std::move(log);
  return result;
}

}  // namespace advnlg
