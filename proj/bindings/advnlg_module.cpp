#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "advnlg/eval.hpp"
#include "advnlg/gumbel.hpp"
#include "advnlg/pipeline.hpp"

namespace py = pybind11;

namespace {

using namespace advnlg;

DelexPolicy policy_from(const std::string& path) {
  return path.empty() ? DelexPolicy::e2e_default()
                      : DelexPolicy::from_json_file(path);
}

py::dict mr_to_dict(const MeaningRepresentation& mr) {
  py::dict d;
  d["act"] = mr.dialogue_act;
  py::list slots;
  for (const auto& [slot, value] : mr.slots) {
    slots.append(py::make_tuple(slot, value));
  }
  d["slots"] = slots;
  return d;
}

py::dict bleu_to_dict(const BleuReport& r) {
  py::dict d;
  d["bleu"] = r.bleu;
  d["precisions"] = std::vector<double>(r.precisions.begin(), r.precisions.end());
  d["brevity_penalty"] = r.brevity_penalty;
  d["hypothesis_length"] = r.hypothesis_length;
  d["reference_length"] = r.reference_length;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adversarially trained seq2seq generation for task-oriented dialogue";
  m.attr("__version__") = kToolVersion;

  py::register_exception<Error>(m, "AdvnlgError");

  m.def("tokenize", [](const std::string& text) { return tokenize(text); },
        py::arg("text"));

  m.def("detokenize", [](const std::vector<std::string>& tokens) {
          return detokenize(tokens);
        },
        py::arg("tokens"));

  m.def("parse_mr",
        [](const std::string& text) { return mr_to_dict(parse_mr(text)); },
        py::arg("text"));

  m.def("delexicalize",
        [](const std::string& mr_text, const std::string& utterance,
           const std::string& policy_path) {
          AuditLog audit;
          DelexicalizedPair pair = delexicalize(parse_mr(mr_text), utterance,
                                                policy_from(policy_path), &audit);
          py::dict d;
          d["input_tokens"] = pair.input_tokens;
          d["target_tokens"] = pair.target_tokens;
          d["substitutions"] = pair.substitutions;
          d["audit"] = audit;
          return d;
        },
        py::arg("mr"), py::arg("utterance"), py::arg("policy_path") = "");

  m.def("relexicalize",
        [](const std::vector<std::string>& tokens,
           const std::map<std::string, std::string>& substitutions) {
          return relexicalize(tokens, substitutions);
        },
        py::arg("tokens"), py::arg("substitutions"));

  m.def("sample_gumbel",
        [](std::size_t count, std::uint64_t seed) {
          RngStream rng(seed);
          return sample_gumbel(count, rng);
        },
        py::arg("count"), py::arg("seed") = 0);

  m.def("gumbel_softmax",
        [](const std::vector<double>& probs, double tau, std::uint64_t seed) {
          RngStream rng(seed);
          Tensor p = Tensor::constant({probs.size()}, probs);
          return gumbel_softmax(p, tau, rng).values();
        },
        py::arg("probs"), py::arg("tau"), py::arg("seed") = 0);

  m.def("bleu4",
        [](const std::vector<TokenSeq>& hyps, const std::vector<RefSet>& refs) {
          return bleu_to_dict(bleu4(hyps, refs));
        },
        py::arg("hypotheses"), py::arg("references"));

  m.def("slot_coverage",
        [](const std::string& hypothesis, const std::string& mr_text,
           const std::string& policy_path) {
          SlotCoverage c = slot_coverage(hypothesis, parse_mr(mr_text),
                                         policy_from(policy_path));
          return py::make_tuple(c.covered, c.missing, c.hallucinated_placeholders);
        },
        py::arg("hypothesis"), py::arg("mr"), py::arg("policy_path") = "");

  m.def("significance",
        [](const std::vector<TokenSeq>& a, const std::vector<TokenSeq>& b,
           const std::vector<RefSet>& refs, std::size_t resamples,
           std::uint64_t seed) { return significance(a, b, refs, resamples, seed); },
        py::arg("hyps_a"), py::arg("hyps_b"), py::arg("refs"),
        py::arg("resamples") = 1000, py::arg("seed") = 12345);

  m.def("prepare",
        [](const std::string& input_path, const std::string& out_dir,
           const std::string& format, const std::string& policy_path,
           double dev_fraction, std::size_t min_count, bool force) {
          PrepareOptions opts;
          opts.input_path = input_path;
          opts.out_dir = out_dir;
          opts.format = parse_corpus_format(format);
          opts.policy_path = policy_path;
          opts.dev_fraction = dev_fraction;
          opts.min_count = min_count;
          opts.force = force;
          PrepareSummary s = prepare_corpus(opts);
          py::dict d;
          d["entries"] = s.entries;
          d["train_pairs"] = s.train_pairs;
          d["dev_pairs"] = s.dev_pairs;
          d["audit_lines"] = s.audit_lines;
          return d;
        },
        py::arg("input_path"), py::arg("out_dir"), py::arg("format") = "e2e-csv",
        py::arg("policy_path") = "", py::arg("dev_fraction") = 0.1,
        py::arg("min_count") = 1, py::arg("force") = false);

  m.def("train",
        [](const std::string& data_dir, const std::string& out_dir,
           const std::map<std::string, std::string>& overrides,
           const std::string& config_path, bool force) {
          TrainOptions opts;
          opts.data_dir = data_dir;
          opts.out_dir = out_dir;
          opts.overrides = overrides;
          opts.config_path = config_path;
          opts.force = force;
          TrainSummary s = train_command(opts);
          py::dict d;
          d["best_epoch"] = s.best_epoch;
          d["best_dev_bleu"] = s.best_dev;
          d["final_dev_bleu"] = s.final_dev;
          d["warmup_dev_bleu"] = s.warmup_dev;
          d["resumed_from_warmup"] = s.resumed_from_warmup;
          d["mode"] = train_mode_name(s.config.mode);
          d["out_dir"] = s.out_dir;
          return d;
        },
        py::arg("data_dir"), py::arg("out_dir"),
        py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("config_path") = "", py::arg("force") = false);

  m.def("generate",
        [](const std::string& checkpoint, const std::string& input_path,
           const std::string& out_path, std::size_t beam, bool force) {
          GenerateOptions opts;
          opts.checkpoint = checkpoint;
          opts.input_path = input_path;
          opts.out_path = out_path;
          opts.beam = beam;
          opts.force = force;
          return generate_command(opts);
        },
        py::arg("checkpoint"), py::arg("input_path"), py::arg("out_path"),
        py::arg("beam") = 10, py::arg("force") = false);

  m.def("evaluate",
        [](const std::string& predictions, const std::string& references,
           const std::string& against, std::size_t bootstrap, std::uint64_t seed,
           const std::string& report_path, bool force) {
          EvalOptions opts;
          opts.predictions = predictions;
          opts.references = references;
          opts.against = against;
          opts.bootstrap = bootstrap;
          opts.seed = seed;
          opts.report_path = report_path;
          opts.force = force;
          EvalSummary s = eval_command(opts);
          py::dict d = bleu_to_dict(s.report.bleu);
          d["slot_coverage"] = s.report.slot_coverage_rate;
          d["hallucinated_placeholders"] = s.report.hallucinated_placeholders;
          if (s.p_value) d["p_value"] = *s.p_value;
          return d;
        },
        py::arg("predictions"), py::arg("references"), py::arg("against") = "",
        py::arg("bootstrap") = 1000, py::arg("seed") = 12345,
        py::arg("report_path") = "", py::arg("force") = false);

  m.def("inspect_gradients",
        [](const std::string& data_dir, const std::string& out_path,
           std::size_t draws,
           const std::map<std::string, std::string>& overrides, bool force) {
          InspectOptions opts;
          opts.data_dir = data_dir;
          opts.out_path = out_path;
          opts.draws = draws;
          opts.overrides = overrides;
          opts.force = force;
          InspectSummary s = inspect_gradients_command(opts);
          py::dict d;
          d["st_mean_variance"] = s.st_mean_variance;
          d["rl_mean_variance"] = s.rl_mean_variance;
          d["st_frozen_repeat_variance"] = s.st_frozen_repeat_variance;
          return d;
        },
        py::arg("data_dir"), py::arg("out_path"), py::arg("draws") = 100,
        py::arg("overrides") = std::map<std::string, std::string>{},
        py::arg("force") = false);
}
