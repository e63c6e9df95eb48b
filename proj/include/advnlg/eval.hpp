#pragma once

#include "advnlg/corpus.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace advnlg {

using TokenSeq = std::vector<std::string>;
using RefSet = std::vector<TokenSeq>;

// Corpus-level multi-reference BLEU-4: clipped n-gram counts against the
// per-reference maximum, geometric mean of p1..p4, closest-reference-length
// brevity penalty (ties toward the shorter reference), no smoothing. Any
// zero precision makes BLEU 0 with the components still reported.
struct BleuReport {
  double bleu = 0.0;
  std::array<double, 4> precisions{};
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

BleuReport bleu4(std::span<const TokenSeq> hypotheses,
                 std::span<const RefSet> references);

struct SlotCoverage {
  std::size_t covered = 0;
  std::size_t missing = 0;
  std::size_t hallucinated_placeholders = 0;
};

// A slot counts as covered when its surface value (or one of the policy's
// realization phrases for closed-class values) occurs in the hypothesis,
// compared on tokenized lowercase text. Leftover placeholder tokens count
// as hallucinations.
SlotCoverage slot_coverage(const std::string& hypothesis,
                           const MeaningRepresentation& mr,
                           const DelexPolicy& policy);

// Paired bootstrap over instance indices: the one-sided p-value is the
// fraction of resamples whose BLEU difference flips sign against the
// full-corpus difference. A zero full-corpus difference gives p = 1.
double significance(std::span<const TokenSeq> hyps_a,
                    std::span<const TokenSeq> hyps_b,
                    std::span<const RefSet> refs, std::size_t resamples,
                    std::uint64_t seed);

struct InstanceRecord {
  std::string mr_text;
  std::string hypothesis;
  SlotCoverage coverage;
};

struct EvalReport {
  BleuReport bleu;
  double slot_coverage_rate = 1.0;
  std::size_t covered = 0;
  std::size_t missing = 0;
  std::size_t hallucinated_placeholders = 0;
  std::vector<InstanceRecord> instances;
};

// Tokenizes with the corpus tokenizer, scores BLEU against the grouped
// references, and aggregates slot coverage from the MR strings.
EvalReport evaluate_predictions(
    std::span<const std::pair<std::string, std::string>> mr_and_hypothesis,
    std::span<const std::vector<std::string>> reference_strings,
    const DelexPolicy& policy);

std::string render_report_table(const EvalReport& report);
void write_report_records(const std::string& path, const EvalReport& report);

}  // namespace advnlg
