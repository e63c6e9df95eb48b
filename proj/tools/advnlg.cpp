#include "advnlg/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace {

// Exit codes: 0 success, 2 input/config error, 3 numerical abort.
constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::map<std::string, std::string> parse_overrides(
    const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw advnlg::ConfigError("--set expects key=value, got: " + s);
    }
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace advnlg;

  CLI::App app{"Adversarially trained seq2seq generation for task-oriented dialogue"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  // prepare
  PrepareOptions prep;
  std::string prep_format = "e2e-csv";
  auto* cmd_prepare = app.add_subcommand("prepare", "Delexicalize a corpus and build the vocabulary");
  cmd_prepare->add_option("--input", prep.input_path, "Source corpus file")->required();
  cmd_prepare->add_option("--format", prep_format, "e2e-csv or rnnlg-json")
      ->check(CLI::IsMember({"e2e-csv", "rnnlg-json"}));
  cmd_prepare->add_option("--out", prep.out_dir, "Output directory")->required();
  cmd_prepare->add_option("--delex-policy", prep.policy_path, "Delexicalization policy JSON");
  cmd_prepare->add_option("--dev-fraction", prep.dev_fraction,
                          "Dev split fraction; 0 mirrors train into dev");
  cmd_prepare->add_option("--min-count", prep.min_count, "Vocabulary frequency cutoff");
  cmd_prepare->add_flag("--force", prep.force, "Overwrite an existing manifest");

  // train
  TrainOptions train;
  std::string train_mode;
  std::vector<std::string> train_sets;
  auto* cmd_train = app.add_subcommand("train", "Run the training schedule");
  cmd_train->add_option("--data", train.data_dir, "Prepared data directory")->required();
  cmd_train->add_option("--out", train.out_dir, "Output directory")->required();
  cmd_train->add_option("--config", train.config_path, "key=value config file");
  cmd_train->add_option("--mode", train_mode, "advnlg | rl | no-adv | no-warmup");
  cmd_train->add_option("--set", train_sets, "Config override key=value (repeatable)");
  cmd_train->add_flag("--force", train.force, "Overwrite an existing manifest");

  // generate
  GenerateOptions gen;
  auto* cmd_generate = app.add_subcommand("generate", "Decode MRs with a trained model");
  cmd_generate->add_option("--checkpoint", gen.checkpoint, "Checkpoint file")->required();
  cmd_generate->add_option("--input", gen.input_path, "MR-per-line text or e2e-csv")->required();
  cmd_generate->add_option("--out", gen.out_path, "Output predictions file")->required();
  cmd_generate->add_option("--beam", gen.beam, "Beam width");
  cmd_generate->add_option("--vocab", gen.vocab_path, "Vocabulary (default: next to checkpoint)");
  cmd_generate->add_option("--meta", gen.meta_path, "Model meta (default: next to checkpoint)");
  cmd_generate->add_option("--policy", gen.policy_path, "Delex policy (default: next to checkpoint)");
  cmd_generate->add_flag("--force", gen.force, "Overwrite an existing output file");

  // eval
  EvalOptions eval;
  auto* cmd_eval = app.add_subcommand("eval", "Score predictions against references");
  cmd_eval->add_option("--predictions", eval.predictions, "Decode output file")->required();
  cmd_eval->add_option("--references", eval.references, "e2e-csv references")->required();
  cmd_eval->add_option("--against", eval.against, "Second predictions file for a paired bootstrap");
  cmd_eval->add_option("--report", eval.report_path, "JSONL report output");
  cmd_eval->add_option("--policy", eval.policy_path, "Delex policy JSON");
  cmd_eval->add_option("--bootstrap", eval.bootstrap, "Bootstrap resamples");
  cmd_eval->add_option("--seed", eval.seed, "Bootstrap seed");
  cmd_eval->add_flag("--force", eval.force, "Overwrite an existing report file");

  // inspect-gradients
  InspectOptions inspect;
  std::vector<std::string> inspect_sets;
  auto* cmd_inspect = app.add_subcommand(
      "inspect-gradients",
      "Compare straight-through and REINFORCE gradient variance on a frozen batch");
  cmd_inspect->add_option("--data", inspect.data_dir, "Prepared data directory")->required();
  cmd_inspect->add_option("--out", inspect.out_path, "JSON report path")->required();
  cmd_inspect->add_option("--draws", inspect.draws, "Number of gradient draws");
  cmd_inspect->add_option("--set", inspect_sets, "Config override key=value (repeatable)");
  cmd_inspect->add_flag("--force", inspect.force, "Overwrite an existing report file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_prepare) {
      prep.format = parse_corpus_format(prep_format);
      const PrepareSummary s = prepare_corpus(prep);
      std::printf("prepared %zu entries: %zu train pairs, %zu dev pairs\n",
                  s.entries, s.train_pairs, s.dev_pairs);
      if (s.entries == 0) {
        std::printf("warning: the corpus is empty\n");
      }
      if (s.audit_lines > 0) {
        std::printf("audit: %zu unmatched slot values (see audit.txt)\n",
                    s.audit_lines);
      } else {
        std::printf("audit clean\n");
      }
    } else if (*cmd_train) {
      train.overrides = parse_overrides(train_sets);
      if (!train_mode.empty()) train.overrides["mode"] = train_mode;
      const TrainSummary s = train_command(train);
      std::printf("trained %s for %zu epochs (mode %s)\n", s.out_dir.c_str(),
                  s.config.total_epochs, train_mode_name(s.config.mode).c_str());
      if (s.resumed_from_warmup) std::printf("resumed from warmup checkpoint\n");
      std::printf("dev BLEU: best %.4f (epoch %zu), final %.4f\n", s.best_dev,
                  s.best_epoch, s.final_dev);
    } else if (*cmd_generate) {
      const std::size_t n = generate_command(gen);
      std::printf("wrote %zu hypotheses to %s\n", n, gen.out_path.c_str());
    } else if (*cmd_eval) {
      const EvalSummary s = eval_command(eval);
      std::fputs(render_report_table(s.report).c_str(), stdout);
      if (s.p_value) {
        std::printf("paired bootstrap p-value   %.4f\n", *s.p_value);
      }
    } else if (*cmd_inspect) {
      inspect.overrides = parse_overrides(inspect_sets);
      const InspectSummary s = inspect_gradients_command(inspect);
      std::printf("mean gradient variance: straight-through %.3e, reinforce %.3e\n",
                  s.st_mean_variance, s.rl_mean_variance);
      std::printf("frozen-noise repeat variance: %.3e\n",
                  s.st_frozen_repeat_variance);
    }
  } catch (const NumericalAbort& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
