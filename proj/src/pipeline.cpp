#include "advnlg/pipeline.hpp"

#include "advnlg/checkpoint.hpp"
#include "advnlg/discriminator.hpp"
#include "advnlg/gumbel.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace advnlg {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a_bytes(const std::string& data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void refuse_existing_manifest(const std::string& out_dir, bool force) {
  const std::string manifest = out_dir + "/manifest.json";
  if (!force && fs::exists(manifest)) {
    throw ConfigError(manifest + " exists; pass --force to overwrite");
  }
}

void refuse_existing_file(const std::string& path, bool force) {
  if (!force && fs::exists(path)) {
    throw ConfigError(path + " exists; pass --force to overwrite");
  }
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& options,
                    const std::map<std::string, std::string>& input_checksums,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json j;
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  j["options"] = options;
  j["inputs"] = input_checksums;
  j["artifacts"] = artifacts;
  std::ofstream out(out_dir + "/manifest.json");
  if (!out) throw IoError("cannot write manifest in " + out_dir);
  out << j.dump(2) << "\n";
}

DelexPolicy load_policy_or_default(const std::string& path) {
  return path.empty() ? DelexPolicy::e2e_default()
                      : DelexPolicy::from_json_file(path);
}

std::string sibling(const std::string& checkpoint, const std::string& name) {
  return (fs::path(checkpoint).parent_path() / name).string();
}

}  // namespace

std::string file_checksum(const std::string& path) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a_bytes(slurp_file(path))));
  return buf;
}

std::vector<std::string> load_mr_inputs(const std::string& path) {
  std::vector<std::string> out;
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
    auto entries = load_corpus(path, CorpusFormat::kE2eCsv);
    for (const auto& e : entries) {
      for (std::size_t k = 0; k < e.refs.size(); ++k) out.push_back(e.mr_text);
    }
    return out;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

// ---- prepare ----------------------------------------------------------------

PrepareSummary prepare_corpus(const PrepareOptions& opts) {
  if (opts.dev_fraction < 0.0 || opts.dev_fraction >= 1.0) {
    throw ConfigError("dev_fraction must be in [0, 1)");
  }
  fs::create_directories(opts.out_dir);
  refuse_existing_manifest(opts.out_dir, opts.force);

  const DelexPolicy policy = load_policy_or_default(opts.policy_path);
  const auto entries = load_corpus(opts.input_path, opts.format);

  std::vector<std::string> train_mrs, dev_mrs;
  std::vector<DelexicalizedPair> train_pairs, dev_pairs;
  AuditLog audit;
  for (const auto& entry : entries) {
    // Deterministic split by MR-string hash; 0 disables the split and
    // mirrors the corpus into dev.
    const bool to_dev =
        opts.dev_fraction > 0.0 &&
        static_cast<double>(fnv1a_bytes(entry.mr_text) % 1000000) <
            opts.dev_fraction * 1000000.0;
    for (const auto& ref : entry.refs) {
      AuditLog entry_audit;
      DelexicalizedPair pair = delexicalize(entry.mr, ref, policy, &entry_audit);
      for (const auto& line : entry_audit) {
        audit.push_back(entry.mr_text + ": " + line);
      }
      if (to_dev) {
        dev_mrs.push_back(entry.mr_text);
        dev_pairs.push_back(std::move(pair));
      } else {
        train_mrs.push_back(entry.mr_text);
        train_pairs.push_back(std::move(pair));
      }
    }
  }
  if (opts.dev_fraction == 0.0) {
    dev_mrs = train_mrs;
    dev_pairs = train_pairs;
  }

  write_pairs_jsonl(opts.out_dir + "/train.jsonl", train_mrs, train_pairs);
  write_pairs_jsonl(opts.out_dir + "/dev.jsonl", dev_mrs, dev_pairs);
  const Vocabulary vocab = build_vocab(train_pairs, opts.min_count);
  vocab.save(opts.out_dir + "/vocab.txt");
  policy.save_json(opts.out_dir + "/policy.json");
  {
    std::ofstream out(opts.out_dir + "/audit.txt", std::ios::binary);
    for (const auto& line : audit) out << line << "\n";
  }

  nlohmann::json options;
  options["input"] = opts.input_path;
  options["format"] = opts.format == CorpusFormat::kE2eCsv ? "e2e-csv" : "rnnlg-json";
  options["dev_fraction"] = opts.dev_fraction;
  options["min_count"] = opts.min_count;
  options["policy"] = opts.policy_path.empty() ? "(e2e defaults)" : opts.policy_path;
  write_manifest(opts.out_dir, "prepare", options,
                 {{opts.input_path, file_checksum(opts.input_path)}},
                 {"train.jsonl", "dev.jsonl", "vocab.txt", "policy.json", "audit.txt"});

  PrepareSummary s;
  s.entries = entries.size();
  s.train_pairs = train_pairs.size();
  s.dev_pairs = dev_pairs.size();
  s.audit_lines = audit.size();
  return s;
}

// ---- train -------------------------------------------------------------------

TrainSummary train_command(const TrainOptions& opts) {
  fs::create_directories(opts.out_dir);
  refuse_existing_manifest(opts.out_dir, opts.force);

  std::map<std::string, std::string> kv =
      opts.config_path.empty() ? TrainConfig{}.to_map()
                               : TrainConfig::from_file(opts.config_path).to_map();
  for (const auto& [k, v] : opts.overrides) kv[k] = v;
  if (const char* env_seed = std::getenv("ADVNLG_SEED")) {
    kv["seed"] = env_seed;
  }
  const TrainConfig cfg = TrainConfig::from_map(kv);

  TrainingData data = load_training_data(opts.data_dir);

  nlohmann::json options;
  options["data_dir"] = opts.data_dir;
  for (const auto& [k, v] : cfg.to_map()) options["config"][k] = v;
  std::map<std::string, std::string> checksums;
  for (const char* name : {"train.jsonl", "dev.jsonl", "vocab.txt"}) {
    const std::string p = opts.data_dir + "/" + name;
    checksums[p] = file_checksum(p);
  }
  write_manifest(opts.out_dir, "train", options, checksums,
                 {"warmup.ckpt", "best.ckpt", "final.ckpt", "train.log",
                  "timing.log", "vocab.txt", "policy.json", "model.meta",
                  "config.used"});

  TrainResult result = run_training(cfg, data, opts.out_dir);

  // Self-contained model directory for generation.
  cfg.save(opts.out_dir + "/config.used");
  data.vocab.save(opts.out_dir + "/vocab.txt");
  {
    const std::string src_policy = opts.data_dir + "/policy.json";
    if (fs::exists(src_policy)) {
      fs::copy_file(src_policy, opts.out_dir + "/policy.json",
                    fs::copy_options::overwrite_existing);
    } else {
      DelexPolicy::e2e_default().save_json(opts.out_dir + "/policy.json");
    }
  }
  {
    std::map<std::string, std::string> meta;
    meta["vocab_size"] = std::to_string(data.vocab.size());
    meta["emb_dim"] = std::to_string(cfg.emb_dim);
    meta["hidden_dim"] = std::to_string(cfg.hidden_dim);
    meta["max_target_tokens"] = std::to_string(data.max_target_tokens);
    meta["rollout_cap"] = std::to_string(rollout_cap(cfg, data));
    meta["beam_length_norm"] = cfg.beam_length_norm ? "true" : "false";
    write_kv_file(opts.out_dir + "/model.meta", meta);
  }

  TrainSummary s;
  s.config = cfg;
  s.best_epoch = result.best_epoch;
  s.best_dev = result.best_dev;
  s.final_dev = result.final_dev;
  s.warmup_dev = result.warmup_dev;
  s.resumed_from_warmup = result.resumed_from_warmup;
  s.out_dir = opts.out_dir;
  return s;
}

// ---- generate ----------------------------------------------------------------

std::size_t generate_command(const GenerateOptions& opts) {
  if (opts.beam < 1) throw ConfigError("beam width must be >= 1");
  refuse_existing_file(opts.out_path, opts.force);

  const std::string vocab_path =
      opts.vocab_path.empty() ? sibling(opts.checkpoint, "vocab.txt")
                              : opts.vocab_path;
  const std::string meta_path =
      opts.meta_path.empty() ? sibling(opts.checkpoint, "model.meta")
                             : opts.meta_path;
  const std::string policy_path =
      opts.policy_path.empty() ? sibling(opts.checkpoint, "policy.json")
                               : opts.policy_path;

  const Vocabulary vocab = Vocabulary::load(vocab_path);
  const auto meta = read_kv_file(meta_path);
  auto meta_u64 = [&](const char* key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw ConfigError(meta_path + ": missing key " + key);
    return std::stoull(it->second);
  };
  if (meta_u64("vocab_size") != vocab.size()) {
    throw ConfigError("vocabulary mismatch: checkpoint expects " +
                      std::to_string(meta_u64("vocab_size")) + " tokens, " +
                      vocab_path + " has " + std::to_string(vocab.size()));
  }
  TrainConfig cfg;
  cfg.emb_dim = meta_u64("emb_dim");
  cfg.hidden_dim = meta_u64("hidden_dim");
  const std::size_t max_len = std::max<std::size_t>(2, meta_u64("rollout_cap"));
  const bool length_norm = meta.count("beam_length_norm") == 0 ||
                           meta.at("beam_length_norm") == "true";

  Model model = make_model(vocab.size(), cfg);
  {
    const std::array<ParamStore*, 3> stores{&model.shared, &model.gen, &model.disc};
    load_checkpoint(opts.checkpoint, stores);
  }
  const DelexPolicy policy = fs::exists(policy_path)
                                 ? DelexPolicy::from_json_file(policy_path)
                                 : DelexPolicy::e2e_default();

  const std::vector<std::string> inputs = load_mr_inputs(opts.input_path);
  std::ofstream out(opts.out_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + opts.out_path);
  char score_buf[40];
  for (const std::string& mr_text : inputs) {
    const MeaningRepresentation mr = parse_mr(mr_text);
    const MeaningRepresentation delexed = delexicalize_mr(mr, policy);
    std::map<std::string, std::string> subs;
    {
      std::map<std::string, std::size_t> seen;
      for (const auto& [slot, value] : mr.slots) {
        if (!policy.delexicalizes(slot)) continue;
        const std::size_t ordinal = ++seen[normalize_slot_name(slot)];
        subs[placeholder_token(slot, ordinal)] = value;
      }
    }
    const std::vector<int> input_ids = vocab.encode(linearize(delexed));
    const auto beams =
        beam_decode(model.G, input_ids, opts.beam, max_len, length_norm);
    std::string hyp;
    double score = 0.0;
    if (!beams.empty()) {
      hyp = relexicalize(vocab.decode(beams[0].tokens), subs);
      score = beams[0].score;
    }
    std::snprintf(score_buf, sizeof(score_buf), "%.6f", score);
    out << mr_text << "\t" << hyp << "\t" << score_buf << "\n";
  }
  return inputs.size();
}

// ---- eval ---------------------------------------------------------------------

namespace {

struct PredictionFile {
  std::vector<std::string> mrs;
  std::vector<std::string> hyps;
};

PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions " + path);
  PredictionFile out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab1 = line.find('\t');
    if (tab1 == std::string::npos) {
      throw ParseError(path + ": line " + std::to_string(n) +
                       ": expected tab-separated MR, hypothesis, score");
    }
    const std::size_t tab2 = line.find('\t', tab1 + 1);
    out.mrs.push_back(line.substr(0, tab1));
    out.hyps.push_back(tab2 == std::string::npos
                           ? line.substr(tab1 + 1)
                           : line.substr(tab1 + 1, tab2 - tab1 - 1));
  }
  return out;
}

}  // namespace

EvalSummary eval_command(const EvalOptions& opts) {
  const PredictionFile preds = read_predictions(opts.predictions);
  const auto entries = load_corpus(opts.references, CorpusFormat::kE2eCsv);
  if (preds.mrs.size() != entries.size()) {
    throw ConfigError("predictions have " + std::to_string(preds.mrs.size()) +
                      " lines but references group into " +
                      std::to_string(entries.size()) + " MRs");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (preds.mrs[i] != entries[i].mr_text) {
      throw ConfigError("misaligned files at instance " + std::to_string(i) +
                        ": prediction MR \"" + preds.mrs[i] +
                        "\" vs reference MR \"" + entries[i].mr_text + "\"");
    }
  }
  const DelexPolicy policy = load_policy_or_default(opts.policy_path);

  std::vector<std::pair<std::string, std::string>> mr_hyp;
  std::vector<std::vector<std::string>> refs;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    mr_hyp.emplace_back(preds.mrs[i], preds.hyps[i]);
    refs.push_back(entries[i].refs);
  }
  EvalSummary summary;
  summary.report = evaluate_predictions(mr_hyp, refs, policy);

  if (!opts.against.empty()) {
    const PredictionFile other = read_predictions(opts.against);
    if (other.mrs.size() != entries.size()) {
      throw ConfigError("--against file is misaligned with the references");
    }
    std::vector<TokenSeq> a, b;
    std::vector<RefSet> ref_tokens;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (other.mrs[i] != entries[i].mr_text) {
        throw ConfigError("--against file is misaligned at instance " +
                          std::to_string(i));
      }
      a.push_back(tokenize(preds.hyps[i]));
      b.push_back(tokenize(other.hyps[i]));
      RefSet set;
      for (const auto& r : entries[i].refs) set.push_back(tokenize(r));
      ref_tokens.push_back(std::move(set));
    }
    summary.p_value = significance(a, b, ref_tokens, opts.bootstrap, opts.seed);
  }

  if (!opts.report_path.empty()) {
    refuse_existing_file(opts.report_path, opts.force);
    write_report_records(opts.report_path, summary.report);
  }
  return summary;
}

// ---- inspect-gradients -----------------------------------------------------------

namespace {

struct GradAccumulator {
  std::map<std::string, std::vector<double>> sum;
  std::map<std::string, std::vector<double>> sum_sq;
  std::size_t draws = 0;

  void add(const ParamStore& store) {
    for (const auto& name : store.names()) {
      const Tensor& p = store.get(name);
      auto& s = sum[name];
      auto& q = sum_sq[name];
      if (s.empty()) {
        s.assign(p.size(), 0.0);
        q.assign(p.size(), 0.0);
      }
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        s[i] += g[i];
        q[i] += g[i] * g[i];
      }
    }
    ++draws;
  }

  double group_variance(const std::string& name) const {
    const auto& s = sum.at(name);
    const auto& q = sum_sq.at(name);
    const double n = static_cast<double>(draws);
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double mean = s[i] / n;
      total += std::max(0.0, q[i] / n - mean * mean);
    }
    return total / static_cast<double>(s.size());
  }
};

}  // namespace

InspectSummary inspect_gradients_command(const InspectOptions& opts) {
  if (opts.draws < 2) throw ConfigError("inspect-gradients needs draws >= 2");
  refuse_existing_file(opts.out_path, opts.force);

  std::map<std::string, std::string> kv = TrainConfig{}.to_map();
  for (const auto& [k, v] : opts.overrides) kv[k] = v;
  const TrainConfig cfg = TrainConfig::from_map(kv);
  TrainingData data = load_training_data(opts.data_dir);

  Model model = make_model(data.vocab.size(), cfg);
  const std::size_t batch = std::min(cfg.batch_size, data.train.size());
  if (batch < 1) throw UsageError("inspect-gradients: empty corpus");
  const std::size_t cap = rollout_cap(cfg, data);
  const StForward mode = cfg.st_forward_perturbed ? StForward::kPerturbedArgmax
                                                  : StForward::kGreedy;

  std::vector<SequenceRepr> real;
  for (std::size_t i = 0; i < batch; ++i) {
    real.push_back(sequence_from_ids(data.train_ids[i].target));
  }

  auto st_draw = [&](std::uint64_t draw_key, GradAccumulator* acc) {
    GradientTape tape;
    std::vector<SequenceRepr> fake;
    for (std::size_t i = 0; i < batch; ++i) {
      RngStream rng = RngStream(cfg.seed).split("inspect-st").split(draw_key, i);
      Rollout roll =
          generate_rollout(model.G, data.train_ids[i].input, cfg.tau, cap, rng, mode);
      fake.push_back(sequence_from_rollout(roll));
    }
    // Inference-mode scoring keeps the critic a fixed function across draws.
    Tensor loss = wgan_g_loss(score_batch(model.D, fake, false));
    tape.backward(loss);
    if (acc) acc->add(model.gen);
    model.gen.zero_grads();
    model.shared.zero_grads();
    model.disc.zero_grads();
  };

  GradAccumulator st_acc;
  for (std::size_t d = 0; d < opts.draws; ++d) st_draw(d, &st_acc);

  // Frozen-noise repeats: the same draw key twice must give the identical
  // gradient, so this variance is exactly zero.
  GradAccumulator frozen;
  st_draw(0, &frozen);
  st_draw(0, &frozen);

  GradAccumulator rl_acc;
  for (std::size_t d = 0; d < opts.draws; ++d) {
    GradientTape tape;
    std::vector<PolicySample> samples;
    for (std::size_t i = 0; i < batch; ++i) {
      RngStream rng = RngStream(cfg.seed).split("inspect-rl").split(d, i);
      samples.push_back(
          sample_policy_rollout(model.G, data.train_ids[i].input, cap, rng));
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
    double baseline = 0.0;
    for (double r : rewards) baseline += r;
    baseline /= static_cast<double>(rewards.size());
    Tensor loss;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Tensor term = scale(samples[i].seq_logprob, -(rewards[i] - baseline));
      loss = loss.defined() ? add(loss, term) : term;
    }
    loss = scale(loss, 1.0 / static_cast<double>(samples.size()));
    tape.backward(loss);
    rl_acc.add(model.gen);
    model.gen.zero_grads();
    model.shared.zero_grads();
    model.disc.zero_grads();
  }

  InspectSummary summary;
  for (const auto& name : model.gen.names()) {
    GroupVariance g;
    g.name = name;
    g.st_variance = st_acc.group_variance(name);
    g.rl_variance = rl_acc.group_variance(name);
    summary.st_mean_variance += g.st_variance;
    summary.rl_mean_variance += g.rl_variance;
    summary.st_frozen_repeat_variance =
        std::max(summary.st_frozen_repeat_variance, frozen.group_variance(name));
    summary.groups.push_back(std::move(g));
  }
  const double n_groups = static_cast<double>(summary.groups.size());
  summary.st_mean_variance /= n_groups;
  summary.rl_mean_variance /= n_groups;

  nlohmann::json j;
  j["draws"] = opts.draws;
  j["seed"] = cfg.seed;
  j["st_mean_variance"] = summary.st_mean_variance;
  j["rl_mean_variance"] = summary.rl_mean_variance;
  j["st_frozen_repeat_variance"] = summary.st_frozen_repeat_variance;
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : summary.groups) {
    nlohmann::json gj;
    gj["name"] = g.name;
    gj["st_variance"] = g.st_variance;
    gj["rl_variance"] = g.rl_variance;
    groups.push_back(gj);
  }
  j["groups"] = groups;
  std::ofstream out(opts.out_path);
  if (!out) throw IoError("cannot write " + opts.out_path);
  out << j.dump(2) << "\n";
  return summary;
}

}  // namespace advnlg
