#include "advnlg/eval.hpp"

#include "advnlg/rng.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace advnlg {

namespace {

std::string gram_key(const TokenSeq& tokens, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    key += tokens[start + i];
    key.push_back('\x1f');
  }
  return key;
}

struct BleuCounts {
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

BleuCounts instance_counts(const TokenSeq& hyp, const RefSet& refs) {
  BleuCounts c;
  c.hyp_len = hyp.size();
  // Closest reference length, ties toward the shorter.
  std::size_t best = refs[0].size();
  for (const TokenSeq& r : refs) {
    const auto diff = [&](std::size_t len) {
      return len > c.hyp_len ? len - c.hyp_len : c.hyp_len - len;
    };
    if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) {
      best = r.size();
    }
  }
  c.ref_len = best;

  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) continue;
    c.total[n - 1] += hyp.size() - n + 1;
    std::unordered_map<std::string, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[gram_key(hyp, i, n)];
    std::unordered_map<std::string, std::size_t> max_ref;
    for (const TokenSeq& r : refs) {
      std::unordered_map<std::string, std::size_t> rc;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++rc[gram_key(r, i, n)];
      for (const auto& [k, v] : rc) max_ref[k] = std::max(max_ref[k], v);
    }
    for (const auto& [k, v] : hyp_counts) {
      auto it = max_ref.find(k);
      if (it != max_ref.end()) c.matched[n - 1] += std::min(v, it->second);
    }
  }
  return c;
}

}  // namespace

BleuReport bleu4(std::span<const TokenSeq> hypotheses,
                 std::span<const RefSet> references) {
  if (hypotheses.size() != references.size()) {
    throw UsageError("bleu4: hypothesis/reference count mismatch (" +
                     std::to_string(hypotheses.size()) + " vs " +
                     std::to_string(references.size()) + ")");
  }
  BleuCounts acc;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    if (references[i].empty()) {
      throw UsageError("bleu4: empty reference set at instance " + std::to_string(i));
    }
    BleuCounts c = instance_counts(hypotheses[i], references[i]);
    for (std::size_t n = 0; n < 4; ++n) {
      acc.matched[n] += c.matched[n];
      acc.total[n] += c.total[n];
    }
    acc.hyp_len += c.hyp_len;
    acc.ref_len += c.ref_len;
  }

  BleuReport report;
  report.hypothesis_length = acc.hyp_len;
  report.reference_length = acc.ref_len;
  bool any_zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    report.precisions[n] =
        acc.total[n] == 0 ? 0.0
                          : static_cast<double>(acc.matched[n]) /
                                static_cast<double>(acc.total[n]);
    if (report.precisions[n] == 0.0) any_zero = true;
  }
  if (acc.hyp_len == 0) {
    report.brevity_penalty = 0.0;
    return report;
  }
  report.brevity_penalty =
      acc.hyp_len > acc.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(acc.ref_len) /
                               static_cast<double>(acc.hyp_len));
  if (!any_zero) {
    double log_sum = 0.0;
    for (double p : report.precisions) log_sum += std::log(p);
    report.bleu = report.brevity_penalty * std::exp(0.25 * log_sum);
  }
  return report;
}

namespace {

bool contains_subsequence(const TokenSeq& haystack, const TokenSeq& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return needle.empty();
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (haystack[i + j] != needle[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace

SlotCoverage slot_coverage(const std::string& hypothesis,
                           const MeaningRepresentation& mr,
                           const DelexPolicy& policy) {
  SlotCoverage out;
  const TokenSeq hyp_tokens = tokenize(hypothesis);
  for (const std::string& tok : hyp_tokens) {
    if (is_placeholder(tok)) ++out.hallucinated_placeholders;
  }
  for (const auto& [slot, value] : mr.slots) {
    std::vector<std::string> candidates{value};
    auto slot_it = policy.realizations.find(normalize_slot_name(slot));
    if (slot_it != policy.realizations.end()) {
      std::string lower_value = value;
      for (char& ch : lower_value) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      auto value_it = slot_it->second.find(lower_value);
      if (value_it != slot_it->second.end()) {
        candidates.insert(candidates.end(), value_it->second.begin(),
                          value_it->second.end());
      }
    }
    bool found = false;
    for (const std::string& cand : candidates) {
      if (contains_subsequence(hyp_tokens, tokenize(cand))) {
        found = true;
        break;
      }
    }
    if (found) {
      ++out.covered;
    } else {
      ++out.missing;
    }
  }
  return out;
}

double significance(std::span<const TokenSeq> hyps_a,
                    std::span<const TokenSeq> hyps_b,
                    std::span<const RefSet> refs, std::size_t resamples,
                    std::uint64_t seed) {
  if (hyps_a.size() != hyps_b.size() || hyps_a.size() != refs.size()) {
    throw UsageError("significance: aligned lists required");
  }
  if (resamples < 100) throw UsageError("significance: resamples must be >= 100");
  const double full_delta = bleu4(hyps_a, refs).bleu - bleu4(hyps_b, refs).bleu;
  if (full_delta == 0.0) return 1.0;

  const std::size_t n = hyps_a.size();
  RngStream root(seed);
  std::size_t flips = 0;
  std::vector<TokenSeq> a(n), b(n);
  std::vector<RefSet> r(n);
  for (std::size_t k = 0; k < resamples; ++k) {
    RngStream draw = root.split("resample").split(k);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = draw.index(n);
      a[i] = hyps_a[j];
      b[i] = hyps_b[j];
      r[i] = refs[j];
    }
    const double delta = bleu4(a, r).bleu - bleu4(b, r).bleu;
    if (full_delta > 0.0 ? delta <= 0.0 : delta >= 0.0) ++flips;
  }
  return static_cast<double>(flips) / static_cast<double>(resamples);
}

EvalReport evaluate_predictions(
    std::span<const std::pair<std::string, std::string>> mr_and_hypothesis,
    std::span<const std::vector<std::string>> reference_strings,
    const DelexPolicy& policy) {
  if (mr_and_hypothesis.size() != reference_strings.size()) {
    throw UsageError("evaluate_predictions: prediction/reference count mismatch");
  }
  std::vector<TokenSeq> hyps;
  std::vector<RefSet> refs;
  EvalReport report;
  for (std::size_t i = 0; i < mr_and_hypothesis.size(); ++i) {
    const auto& [mr_text, hyp] = mr_and_hypothesis[i];
    hyps.push_back(tokenize(hyp));
    RefSet set;
    for (const std::string& r : reference_strings[i]) set.push_back(tokenize(r));
    refs.push_back(std::move(set));

    InstanceRecord rec;
    rec.mr_text = mr_text;
    rec.hypothesis = hyp;
    rec.coverage = slot_coverage(hyp, parse_mr(mr_text), policy);
    report.covered += rec.coverage.covered;
    report.missing += rec.coverage.missing;
    report.hallucinated_placeholders += rec.coverage.hallucinated_placeholders;
    report.instances.push_back(std::move(rec));
  }
  report.bleu = bleu4(hyps, refs);
  const std::size_t tracked = report.covered + report.missing;
  report.slot_coverage_rate =
      tracked == 0 ? 1.0
                   : static_cast<double>(report.covered) /
                         static_cast<double>(tracked);
  return report;
}

std::string render_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << "metric                 value\n";
  os << "---------------------  ----------\n";
  char buf[96];
  std::snprintf(buf, sizeof(buf), "BLEU-4                 %.4f\n", report.bleu.bleu);
  os << buf;
  for (std::size_t n = 0; n < 4; ++n) {
    std::snprintf(buf, sizeof(buf), "p%zu                     %.4f\n", n + 1,
                  report.bleu.precisions[n]);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "brevity penalty        %.4f\n",
                report.bleu.brevity_penalty);
  os << buf;
  std::snprintf(buf, sizeof(buf), "hyp/ref length         %zu/%zu\n",
                report.bleu.hypothesis_length, report.bleu.reference_length);
  os << buf;
  std::snprintf(buf, sizeof(buf), "slot coverage          %.4f (%zu/%zu)\n",
                report.slot_coverage_rate, report.covered,
                report.covered + report.missing);
  os << buf;
  std::snprintf(buf, sizeof(buf), "hallucinated tokens    %zu\n",
                report.hallucinated_placeholders);
  os << buf;
  return os.str();
}

void write_report_records(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path);
  {
    nlohmann::json j;
    j["record"] = "summary";
    j["bleu"] = report.bleu.bleu;
    j["p1"] = report.bleu.precisions[0];
    j["p2"] = report.bleu.precisions[1];
    j["p3"] = report.bleu.precisions[2];
    j["p4"] = report.bleu.precisions[3];
    j["brevity_penalty"] = report.bleu.brevity_penalty;
    j["slot_coverage"] = report.slot_coverage_rate;
    j["hallucinated_placeholders"] = report.hallucinated_placeholders;
    out << j.dump() << "\n";
  }
  for (const auto& rec : report.instances) {
    nlohmann::json j;
    j["record"] = "instance";
    j["mr"] = rec.mr_text;
    j["hypothesis"] = rec.hypothesis;
    j["covered"] = rec.coverage.covered;
    j["missing"] = rec.coverage.missing;
    j["hallucinated"] = rec.coverage.hallucinated_placeholders;
    out << j.dump() << "\n";
  }
}

}  // namespace advnlg
