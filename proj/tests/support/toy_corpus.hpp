#pragma once

#include "advnlg/corpus.hpp"
#include "advnlg/trainer.hpp"

#include <string>
#include <vector>

namespace advnlg::testing {

// 32-entry synthetic restaurant corpus: 4 names x 4 foods x 2 areas with one
// template realization. References are lowercase apart from the entity name,
// so relexicalized decodes can reproduce them byte-exactly.
inline std::vector<CorpusEntry> toy_corpus_entries() {
  const std::vector<std::string> names{"Wildwood", "The Plough", "Blue Spice",
                                       "The Mill"};
  const std::vector<std::string> foods{"indian", "chinese", "french", "english"};
  const std::vector<std::string> areas{"riverside", "city centre"};
  std::vector<CorpusEntry> entries;
  for (const auto& name : names) {
    for (const auto& food : foods) {
      for (const auto& area : areas) {
        CorpusEntry e;
        e.mr_text = "name[" + name + "], food[" + food + "], area[" + area + "]";
        e.mr = parse_mr(e.mr_text);
        e.refs.push_back(name + " serves " + food + " food in the " + area + ".");
        entries.push_back(std::move(e));
      }
    }
  }
  return entries;
}

inline std::vector<StoredPair> to_stored_pairs(
    const std::vector<CorpusEntry>& entries, const DelexPolicy& policy) {
  std::vector<StoredPair> out;
  for (const auto& e : entries) {
    for (const auto& ref : e.refs) {
      StoredPair sp;
      sp.mr_text = e.mr_text;
      sp.pair = delexicalize(e.mr, ref, policy);
      out.push_back(std::move(sp));
    }
  }
  return out;
}

// Dev mirrors train: the toy suites measure memorization, not generalization.
inline TrainingData toy_training_data(std::size_t take = 32) {
  auto entries = toy_corpus_entries();
  if (take < entries.size()) entries.resize(take);
  auto pairs = to_stored_pairs(entries, DelexPolicy::e2e_default());
  return make_training_data(pairs, pairs, 1);
}

}  // namespace advnlg::testing
