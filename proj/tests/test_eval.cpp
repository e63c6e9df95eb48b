#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advnlg/eval.hpp"
#include "advnlg/rng.hpp"
#include "support/bleu_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace advnlg;
using advnlg::testing::naive_bleu;

namespace {

TokenSeq toks(std::initializer_list<const char*> t) {
  TokenSeq out;
  for (const char* s : t) out.emplace_back(s);
  return out;
}

std::vector<TokenSeq> random_corpus(RngStream& rng, std::size_t max_sents,
                                    std::size_t max_len) {
  static const std::vector<std::string> pool{"a", "b", "c", "d",  "e",  "f",
                                             "g", "h", "i", "the", "cat", "sat"};
  std::vector<TokenSeq> out;
  const std::size_t sents = 1 + rng.index(max_sents);
  for (std::size_t s = 0; s < sents; ++s) {
    TokenSeq sent;
    const std::size_t len = 1 + rng.index(max_len);
    for (std::size_t i = 0; i < len; ++i) sent.push_back(pool[rng.index(pool.size())]);
    out.push_back(std::move(sent));
  }
  return out;
}

}  // namespace

TEST_CASE("identical hypothesis scores BLEU 1") {
  std::vector<TokenSeq> hyp{toks({"the", "cat", "sat", "here", "today"})};
  std::vector<RefSet> refs{{hyp[0]}};
  BleuReport r = bleu4(hyp, refs);
  CHECK(r.bleu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.brevity_penalty == 1.0);
}

TEST_CASE("disjoint vocabulary scores BLEU 0 with components") {
  std::vector<TokenSeq> hyp{toks({"x", "y", "z", "w"})};
  std::vector<RefSet> refs{{toks({"the", "cat", "sat", "here"})}};
  BleuReport r = bleu4(hyp, refs);
  CHECK(r.bleu == 0.0);
  CHECK(r.precisions[0] == 0.0);
  CHECK(r.hypothesis_length == 4);
}

TEST_CASE("clipping: repeated token matches only its reference count") {
  std::vector<TokenSeq> hyp{toks({"the", "the", "the", "the"})};
  std::vector<RefSet> refs{{toks({"the", "cat", "sat", "here"})}};
  BleuReport r = bleu4(hyp, refs);
  CHECK(r.precisions[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.precisions[1] == 0.0);  // no bigram overlap
  CHECK(r.bleu == 0.0);
  CHECK(r.brevity_penalty == 1.0);  // equal lengths

  BleuReport oracle = naive_bleu(hyp, refs);
  CHECK(oracle.precisions[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("report components satisfy the BLEU identity") {
  std::vector<TokenSeq> hyp{
      toks({"the", "cat", "sat", "on", "the", "mat", "today"})};
  std::vector<RefSet> refs{
      {toks({"the", "cat", "sat", "on", "a", "mat", "today"})}};
  BleuReport r = bleu4(hyp, refs);
  REQUIRE(r.bleu > 0.0);
  double ls = 0.0;
  for (double p : r.precisions) ls += std::log(p);
  CHECK(std::abs(r.bleu - r.brevity_penalty * std::exp(0.25 * ls)) <= 1e-12);
}

TEST_CASE("corpus BLEU is invariant under instance permutation") {
  RngStream rng(21);
  std::vector<TokenSeq> hyps = random_corpus(rng, 8, 10);
  std::vector<RefSet> refs;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    RefSet set;
    const std::size_t n_refs = 1 + rng.index(3);
    for (std::size_t k = 0; k < n_refs; ++k) {
      auto r = random_corpus(rng, 1, 10);
      set.push_back(r[0]);
    }
    refs.push_back(std::move(set));
  }
  const double base = bleu4(hyps, refs).bleu;
  auto perm = rng.permutation(hyps.size());
  std::vector<TokenSeq> hyps2;
  std::vector<RefSet> refs2;
  for (std::size_t idx : perm) {
    hyps2.push_back(hyps[idx]);
    refs2.push_back(refs[idx]);
  }
  CHECK(bleu4(hyps2, refs2).bleu == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("replacing a hypothesis by its reference never lowers BLEU") {
  RngStream rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<TokenSeq> refs_flat = random_corpus(rng, 6, 10);
    std::vector<TokenSeq> hyps = random_corpus(rng, refs_flat.size(), 10);
    hyps.resize(refs_flat.size());
    for (auto& h : hyps) {
      if (h.empty()) h = toks({"a"});
    }
    std::vector<RefSet> refs;
    for (const auto& r : refs_flat) refs.push_back({r});
    const double before = bleu4(hyps, refs).bleu;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      std::vector<TokenSeq> mutated = hyps;
      mutated[i] = refs_flat[i];
      CHECK(bleu4(mutated, refs).bleu >= before - 1e-12);
    }
  }
}

TEST_CASE("bleu4 agrees with the naive counting oracle") {
  RngStream rng(23);
  for (int corpus = 0; corpus < 50; ++corpus) {
    std::vector<TokenSeq> hyps = random_corpus(rng, 10, 12);
    std::vector<RefSet> refs;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      RefSet set;
      const std::size_t n_refs = 1 + rng.index(3);
      for (std::size_t k = 0; k < n_refs; ++k) {
        auto r = random_corpus(rng, 1, 12);
        set.push_back(r[0]);
      }
      refs.push_back(std::move(set));
    }
    BleuReport lib = bleu4(hyps, refs);
    BleuReport oracle = naive_bleu(hyps, refs);
    CHECK(std::abs(lib.bleu - oracle.bleu) <= 1e-12);
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(std::abs(lib.precisions[n] - oracle.precisions[n]) <= 1e-12);
    }
    CHECK(lib.brevity_penalty == doctest::Approx(oracle.brevity_penalty).epsilon(1e-12));
    CHECK(lib.hypothesis_length == oracle.hypothesis_length);
    CHECK(lib.reference_length == oracle.reference_length);
  }
}

TEST_CASE("slot coverage counts the Table-1 realizations") {
  MeaningRepresentation mr = parse_mr(
      "name[Wildwood], eatType[restaurant], food[Indian], area[riverside], "
      "familyFriendly[no], near[Raja Indian Cuisine]");
  const DelexPolicy policy = DelexPolicy::e2e_default();
  SlotCoverage cov = slot_coverage(
      "Wildwood is an Indian restaurant in the riverside area near Raja "
      "Indian Cuisine. It is not family friendly.",
      mr, policy);
  CHECK(cov.covered == 6);
  CHECK(cov.missing == 0);
  CHECK(cov.hallucinated_placeholders == 0);

  SlotCoverage none = slot_coverage("", mr, policy);
  CHECK(none.covered == 0);
  CHECK(none.missing == mr.slots.size());

  SlotCoverage ghost =
      slot_coverage("the " + placeholder_token("name") + " is nice", mr, policy);
  CHECK(ghost.hallucinated_placeholders == 1);
}

TEST_CASE("covered plus missing always equals the tracked slot count") {
  RngStream rng(24);
  const DelexPolicy policy = DelexPolicy::e2e_default();
  for (int trial = 0; trial < 20; ++trial) {
    MeaningRepresentation mr;
    const std::size_t n_slots = rng.index(5);
    for (std::size_t s = 0; s < n_slots; ++s) {
      mr.slots.emplace_back("slot" + std::to_string(s),
                            "value" + std::to_string(rng.index(3)));
    }
    auto hyp_tokens = random_corpus(rng, 1, 8)[0];
    std::string hyp;
    for (const auto& t : hyp_tokens) hyp += t + " ";
    SlotCoverage cov = slot_coverage(hyp, mr, policy);
    CHECK(cov.covered + cov.missing == mr.slots.size());
  }
}

TEST_CASE("paired bootstrap p-values") {
  std::vector<TokenSeq> refs_flat{toks({"the", "cat", "sat", "here"}),
                                  toks({"a", "dog", "ran", "far", "away"}),
                                  toks({"birds", "fly", "south", "every", "year"}),
                                  toks({"fish", "swim", "in", "the", "sea"})};
  std::vector<RefSet> refs;
  for (const auto& r : refs_flat) refs.push_back({r});

  // Identical systems: p = 1 by convention.
  CHECK(significance(refs_flat, refs_flat, refs, 200, 7) == 1.0);

  // A reproduces references exactly, B shares nothing: p = 0.
  std::vector<TokenSeq> garbage{toks({"x", "y", "z", "q"}), toks({"x", "y", "z", "q"}),
                                toks({"x", "y", "z", "q"}), toks({"x", "y", "z", "q"})};
  CHECK(significance(refs_flat, garbage, refs, 300, 7) == 0.0);

  // Determinism in the seed.
  std::vector<TokenSeq> mixed = refs_flat;
  mixed[0] = toks({"the", "cat", "sat", "away"});
  mixed[2] = toks({"birds", "fly", "north", "every", "year"});
  const double p1 = significance(mixed, garbage, refs, 250, 11);
  const double p2 = significance(mixed, garbage, refs, 250, 11);
  CHECK(p1 == p2);

  CHECK_THROWS_AS(significance(refs_flat, garbage, refs, 50, 7), UsageError);
}

TEST_CASE("evaluate_predictions assembles the full report") {
  std::vector<std::pair<std::string, std::string>> preds{
      {"name[Wildwood], food[Indian]", "Wildwood serves Indian food to all."}};
  std::vector<std::vector<std::string>> refs{
      {"Wildwood serves Indian food to all."}};
  EvalReport rep = evaluate_predictions(preds, refs, DelexPolicy::e2e_default());
  CHECK(rep.bleu.bleu == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.slot_coverage_rate == doctest::Approx(1.0));
  CHECK(rep.instances.size() == 1);
  const std::string table = render_report_table(rep);
  CHECK(table.find("BLEU-4") != std::string::npos);
}
