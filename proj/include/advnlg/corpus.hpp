#pragma once

#include "advnlg/errors.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace advnlg {

// Dialogue act plus ordered slot-value pairs, as parsed from the source
// corpus. Duplicate slot names are preserved in order when the source
// contains them.
struct MeaningRepresentation {
  std::string dialogue_act = "inform";
  std::vector<std::pair<std::string, std::string>> slots;
};

// Which slots get delexicalized, plus surface realization phrases used by
// the slot-coverage metric for closed-class values (e.g. familyFriendly[no]).
struct DelexPolicy {
  std::set<std::string> delex_slots;  // normalized slot names
  std::map<std::string, std::map<std::string, std::vector<std::string>>>
      realizations;

  bool delexicalizes(const std::string& slot) const;

  static DelexPolicy e2e_default();
  static DelexPolicy from_json_file(const std::string& path);
  void save_json(const std::string& path) const;
};

struct DelexicalizedPair {
  std::vector<std::string> input_tokens;   // linearized MR, BOS...EOS
  std::vector<std::string> target_tokens;  // delexicalized reference, BOS...EOS
  std::map<std::string, std::string> substitutions;  // placeholder -> surface value
};

using AuditLog = std::vector<std::string>;

// Reserved token strings. BOS/EOS wrap every sequence; placeholders use
// mathematical angle brackets so the tokenizer can keep them atomic.
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

std::string normalize_slot_name(const std::string& slot);
std::string placeholder_token(const std::string& slot, std::size_t ordinal = 1);
bool is_placeholder(const std::string& token);

// Lowercasing word/punctuation tokenizer; placeholder tokens stay atomic.
std::vector<std::string> tokenize(const std::string& text);
// Inverse-ish of tokenize: single spaces with standard punctuation attachment.
std::string detokenize(std::span<const std::string> tokens);

// Parse "slot1[value1], slot2[value2]" syntax (Table-style MR strings).
// Values may not contain '['; errors carry the byte offset.
MeaningRepresentation parse_mr(const std::string& text);
// Render back to the slot[value] syntax (used as a grouping/display key).
std::string format_mr(const MeaningRepresentation& mr);

// Replace slot values in the utterance with placeholder tokens,
// longest-value-first and case-insensitive. Values that never occur are left
// alone and flagged in the audit log. The returned pair's input side is the
// linearization of the delexicalized MR.
DelexicalizedPair delexicalize(const MeaningRepresentation& mr,
                               const std::string& utterance,
                               const DelexPolicy& policy,
                               AuditLog* audit = nullptr);

// Substitute placeholders back and detokenize. Placeholders without a
// substitution stay literal and are flagged.
std::string relexicalize(std::span<const std::string> tokens,
                         const std::map<std::string, std::string>& substitutions,
                         AuditLog* audit = nullptr);

// MR with delexicalized slot values replaced by their placeholders (what the
// pair's input side is built from).
MeaningRepresentation delexicalize_mr(const MeaningRepresentation& mr,
                                      const DelexPolicy& policy);

// BOS, act token, then slot-name token followed by the value's tokens for
// each slot in order, EOS.
std::vector<std::string> linearize(const MeaningRepresentation& mr);

enum class CorpusFormat { kE2eCsv, kRnnlgJson };

CorpusFormat parse_corpus_format(const std::string& name);

// One loaded entry: all references sharing an identical raw MR string are
// grouped (the evaluation view); training flattens back to (mr, ref) pairs.
struct CorpusEntry {
  std::string mr_text;
  MeaningRepresentation mr;
  std::vector<std::string> refs;
};

std::vector<CorpusEntry> load_corpus(const std::string& path, CorpusFormat format);

// Token <-> index bijection with reserved PAD/BOS/EOS/UNK entries.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  // Index for a token, UNK when absent.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  int add(const std::string& token);

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

// Tokens with frequency >= min_count, indexed by descending frequency
// (ties lexicographic). min_count must be >= 1.
Vocabulary build_vocab(std::span<const DelexicalizedPair> pairs,
                       std::size_t min_count);

// JSONL persistence for prepared pairs (one object per line).
void write_pairs_jsonl(const std::string& path,
                       std::span<const std::string> mr_texts,
                       std::span<const DelexicalizedPair> pairs);
struct StoredPair {
  std::string mr_text;
  DelexicalizedPair pair;
};
std::vector<StoredPair> read_pairs_jsonl(const std::string& path);

}  // namespace advnlg
