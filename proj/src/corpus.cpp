#include "advnlg/corpus.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace advnlg {

namespace {

constexpr const char* kOpen = "\xE2\x9F\xA8";   // U+27E8
constexpr const char* kClose = "\xE2\x9F\xA9";  // U+27E9

bool starts_with(const std::string& s, std::size_t pos, const char* prefix) {
  return s.compare(pos, std::strlen(prefix), prefix) == 0;
}

std::string to_lower_ascii(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_word_punct(unsigned char c) {
  return std::ispunct(c) != 0;
}

}  // namespace

std::string normalize_slot_name(const std::string& slot) {
  std::string out;
  for (char raw : trim(slot)) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

std::string placeholder_token(const std::string& slot, std::size_t ordinal) {
  std::string tok = std::string(kOpen) + normalize_slot_name(slot);
  if (ordinal > 1) tok += "." + std::to_string(ordinal);
  tok += kClose;
  return tok;
}

bool is_placeholder(const std::string& token) {
  return token.size() > 6 && starts_with(token, 0, kOpen) &&
         token.compare(token.size() - 3, 3, kClose) == 0;
}

// ---- Tokenizer ----------------------------------------------------------------

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (std::size_t i = 0; i < text.size();) {
    if (starts_with(text, i, kOpen)) {
      const std::size_t close = text.find(kClose, i);
      if (close != std::string::npos) {
        flush();
        out.push_back(to_lower_ascii(text.substr(i, close + 3 - i)));
        i = close + 3;
        continue;
      }
    }
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c < 0x80 && std::isspace(c)) {
      flush();
      ++i;
    } else if (c < 0x80 && is_word_punct(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
      ++i;
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : text[i]);
      ++i;
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  static const std::set<std::string> no_space_before = {
      ".", ",", "!", "?", ";", ":", ")", "]", "'", "-", "%"};
  static const std::set<std::string> no_space_after = {"(", "[", "'", "-", "#"};
  std::string out;
  std::string prev;
  for (const std::string& tok : tokens) {
    if (!out.empty() && !no_space_before.count(tok) && !no_space_after.count(prev)) {
      out.push_back(' ');
    }
    out += tok;
    prev = tok;
  }
  return out;
}

// ---- MR parsing ----------------------------------------------------------------

MeaningRepresentation parse_mr(const std::string& text) {
  MeaningRepresentation mr;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  skip_ws();
  while (i < text.size()) {
    const std::size_t name_start = i;
    while (i < text.size() && text[i] != '[' && text[i] != ']') ++i;
    if (i >= text.size() || text[i] != '[') {
      throw ParseError("expected '[' after slot name at byte " + std::to_string(i));
    }
    const std::string name = trim(text.substr(name_start, i - name_start));
    if (name.empty()) {
      throw ParseError("empty slot name at byte " + std::to_string(name_start));
    }
    ++i;  // past '['
    const std::size_t value_start = i;
    while (i < text.size() && text[i] != ']') {
      if (text[i] == '[') {
        throw ParseError("nested '[' in slot value at byte " + std::to_string(i));
      }
      ++i;
    }
    if (i >= text.size()) {
      throw ParseError("unterminated slot value at byte " + std::to_string(value_start));
    }
    mr.slots.emplace_back(name, trim(text.substr(value_start, i - value_start)));
    ++i;  // past ']'
    skip_ws();
    if (i < text.size()) {
      if (text[i] != ',') {
        throw ParseError("expected ',' between slots at byte " + std::to_string(i));
      }
      ++i;
      skip_ws();
      if (i >= text.size()) {
        throw ParseError("trailing ',' at byte " + std::to_string(i - 1));
      }
    }
  }
  return mr;
}

std::string format_mr(const MeaningRepresentation& mr) {
  std::string out;
  for (std::size_t i = 0; i < mr.slots.size(); ++i) {
    if (i) out += ", ";
    out += mr.slots[i].first + "[" + mr.slots[i].second + "]";
  }
  return out;
}

// ---- Policy ---------------------------------------------------------------------

bool DelexPolicy::delexicalizes(const std::string& slot) const {
  return delex_slots.count(normalize_slot_name(slot)) > 0;
}

DelexPolicy DelexPolicy::e2e_default() {
  DelexPolicy p;
  p.delex_slots = {"name", "near"};
  p.realizations["familyfriendly"]["yes"] = {
      "family friendly", "family-friendly", "child friendly",
      "children friendly", "kid friendly", "kids friendly"};
  p.realizations["familyfriendly"]["no"] = {
      "not family friendly", "not family-friendly", "not child friendly",
      "not kid friendly", "no children", "adults only"};
  return p;
}

DelexPolicy DelexPolicy::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open delex policy " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("delex policy " + path + ": " + e.what());
  }
  DelexPolicy p;
  for (const auto& s : j.value("delexicalize", nlohmann::json::array())) {
    p.delex_slots.insert(normalize_slot_name(s.get<std::string>()));
  }
  if (j.contains("realizations")) {
    for (const auto& [slot, values] : j["realizations"].items()) {
      for (const auto& [value, phrases] : values.items()) {
        auto& dst = p.realizations[normalize_slot_name(slot)][to_lower_ascii(value)];
        for (const auto& ph : phrases) dst.push_back(ph.get<std::string>());
      }
    }
  }
  return p;
}

void DelexPolicy::save_json(const std::string& path) const {
  nlohmann::json j;
  j["delexicalize"] = delex_slots;
  nlohmann::json r = nlohmann::json::object();
  for (const auto& [slot, values] : realizations) {
    for (const auto& [value, phrases] : values) r[slot][value] = phrases;
  }
  j["realizations"] = r;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write delex policy " + path);
  out << j.dump(2) << "\n";
}

// ---- Delexicalization -------------------------------------------------------------

namespace {

struct Replacement {
  std::string value;        // original surface value
  std::string placeholder;  // token to substitute
};

// Case-insensitive search that refuses to match inside spans already
// replaced by placeholders.
void replace_all_protected(std::string& text, std::vector<bool>& shielded,
                           const std::string& value, const std::string& placeholder,
                           bool* found) {
  const std::string lower_value = to_lower_ascii(value);
  if (lower_value.empty()) return;
  std::string lower_text = to_lower_ascii(text);
  std::size_t from = 0;
  while (from + lower_value.size() <= text.size()) {
    const std::size_t pos = lower_text.find(lower_value, from);
    if (pos == std::string::npos) break;
    bool clear = true;
    for (std::size_t k = pos; k < pos + lower_value.size(); ++k) {
      if (shielded[k]) {
        clear = false;
        break;
      }
    }
    if (!clear) {
      from = pos + 1;
      continue;
    }
    text.replace(pos, value.size(), placeholder);
    lower_text.replace(pos, value.size(), placeholder);
    shielded.erase(shielded.begin() + static_cast<std::ptrdiff_t>(pos),
                   shielded.begin() + static_cast<std::ptrdiff_t>(pos + value.size()));
    shielded.insert(shielded.begin() + static_cast<std::ptrdiff_t>(pos),
                    placeholder.size(), true);
    if (found) *found = true;
    from = pos + placeholder.size();
  }
}

}  // namespace

MeaningRepresentation delexicalize_mr(const MeaningRepresentation& mr,
                                      const DelexPolicy& policy) {
  MeaningRepresentation out;
  out.dialogue_act = mr.dialogue_act;
  std::map<std::string, std::size_t> seen;
  for (const auto& [slot, value] : mr.slots) {
    if (policy.delexicalizes(slot)) {
      const std::size_t ordinal = ++seen[normalize_slot_name(slot)];
      out.slots.emplace_back(slot, placeholder_token(slot, ordinal));
    } else {
      out.slots.emplace_back(slot, value);
    }
  }
  return out;
}

DelexicalizedPair delexicalize(const MeaningRepresentation& mr,
                               const std::string& utterance,
                               const DelexPolicy& policy, AuditLog* audit) {
  if (utterance.empty()) throw UsageError("delexicalize: empty utterance");

  std::vector<Replacement> reps;
  std::map<std::string, std::size_t> seen;
  DelexicalizedPair pair;
  for (const auto& [slot, value] : mr.slots) {
    if (!policy.delexicalizes(slot)) continue;
    const std::size_t ordinal = ++seen[normalize_slot_name(slot)];
    const std::string ph = placeholder_token(slot, ordinal);
    reps.push_back({value, ph});
    pair.substitutions[ph] = value;
  }
  // Longest value first so a value that contains another is replaced intact.
  std::stable_sort(reps.begin(), reps.end(),
                   [](const Replacement& a, const Replacement& b) {
                     return a.value.size() > b.value.size();
                   });

  std::string text = utterance;
  std::vector<bool> shielded(text.size(), false);
  for (const Replacement& r : reps) {
    bool found = false;
    replace_all_protected(text, shielded, r.value, r.placeholder, &found);
    if (!found && audit) {
      audit->push_back("unmatched slot value: " + r.placeholder + " = \"" +
                       r.value + "\"");
    }
  }

  pair.target_tokens.push_back(kBosToken);
  for (auto& tok : tokenize(text)) pair.target_tokens.push_back(std::move(tok));
  pair.target_tokens.push_back(kEosToken);
  pair.input_tokens = linearize(delexicalize_mr(mr, policy));
  return pair;
}

std::string relexicalize(std::span<const std::string> tokens,
                         const std::map<std::string, std::string>& substitutions,
                         AuditLog* audit) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& tok : tokens) {
    if (tok == kBosToken || tok == kEosToken || tok == kPadToken) continue;
    if (is_placeholder(tok)) {
      auto it = substitutions.find(tok);
      if (it != substitutions.end()) {
        out.push_back(it->second);
        continue;
      }
      if (audit) audit->push_back("orphan placeholder: " + tok);
    }
    out.push_back(tok);
  }
  return detokenize(out);
}

std::vector<std::string> linearize(const MeaningRepresentation& mr) {
  std::vector<std::string> out;
  out.push_back(kBosToken);
  std::string act = normalize_slot_name(mr.dialogue_act);
  out.push_back(act.empty() ? "inform" : act);
  for (const auto& [slot, value] : mr.slots) {
    out.push_back(normalize_slot_name(slot));
    for (auto& tok : tokenize(value)) out.push_back(std::move(tok));
  }
  out.push_back(kEosToken);
  return out;
}

// ---- Corpus loading -----------------------------------------------------------------

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "e2e-csv") return CorpusFormat::kE2eCsv;
  if (name == "rnnlg-json") return CorpusFormat::kRnnlgJson;
  throw ConfigError("unknown corpus format '" + name + "'");
}

namespace {

// RFC-4180-style reader: quoted fields, doubled quotes, newlines in quotes.
std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const char c = data[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(field);
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty() || !row.empty()) {
          row.push_back(field);
          rows.push_back(row);
        }
        field.clear();
        row.clear();
        any = false;
        break;
      default:
        field.push_back(c);
        any = true;
    }
  }
  if (quoted) throw ParseError(path + ": unterminated quoted field");
  if (any || !field.empty() || !row.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

MeaningRepresentation parse_rnnlg_da(const std::string& da, std::size_t entry) {
  const std::size_t open = da.find('(');
  const std::size_t close = da.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("entry " + std::to_string(entry) +
                     ": dialogue act must be act(slot=value;...) syntax: " + da);
  }
  MeaningRepresentation mr;
  mr.dialogue_act = trim(da.substr(0, open));
  if (mr.dialogue_act.empty()) {
    throw ParseError("entry " + std::to_string(entry) + ": empty dialogue act");
  }
  std::string inner = da.substr(open + 1, close - open - 1);
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    std::string slot = eq == std::string::npos ? item : trim(item.substr(0, eq));
    std::string value = eq == std::string::npos ? "" : trim(item.substr(eq + 1));
    if (value.size() >= 2 && ((value.front() == '\'' && value.back() == '\'') ||
                              (value.front() == '"' && value.back() == '"'))) {
      value = value.substr(1, value.size() - 2);
    }
    if (slot.empty()) {
      throw ParseError("entry " + std::to_string(entry) + ": empty slot name in " + da);
    }
    mr.slots.emplace_back(slot, value);
  }
  return mr;
}

}  // namespace

std::vector<CorpusEntry> load_corpus(const std::string& path, CorpusFormat format) {
  std::vector<std::pair<std::string, std::string>> raw;  // (mr text, ref)
  std::vector<MeaningRepresentation> parsed;

  if (format == CorpusFormat::kE2eCsv) {
    auto rows = read_csv(path);
    if (rows.empty()) throw ParseError(path + ": missing header row");
    if (rows[0].size() != 2 || trim(rows[0][0]) != "mr" || trim(rows[0][1]) != "ref") {
      throw ParseError(path + ": header must be \"mr,ref\"");
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 2) {
        throw ParseError(path + ": row " + std::to_string(r) + " has " +
                         std::to_string(rows[r].size()) + " fields, expected 2");
      }
      try {
        parsed.push_back(parse_mr(rows[r][0]));
      } catch (const ParseError& e) {
        throw ParseError(path + ": row " + std::to_string(r) + ": " + e.what());
      }
      raw.emplace_back(rows[r][0], rows[r][1]);
    }
  } else {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError(path + ": expected a JSON array");
    for (std::size_t k = 0; k < j.size(); ++k) {
      const auto& entry = j[k];
      if (!entry.is_array() || entry.size() < 2 || !entry[0].is_string() ||
          !entry[1].is_string()) {
        throw ParseError(path + ": entry " + std::to_string(k) +
                         " must be [da_string, reference, ...]");
      }
      parsed.push_back(parse_rnnlg_da(entry[0].get<std::string>(), k));
      raw.emplace_back(entry[0].get<std::string>(), entry[1].get<std::string>());
    }
  }

  // Group by the exact raw MR string, keeping first-appearance order.
  std::vector<CorpusEntry> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto it = index.find(raw[i].first);
    if (it == index.end()) {
      index.emplace(raw[i].first, out.size());
      out.push_back({raw[i].first, parsed[i], {raw[i].second}});
    } else {
      out[it->second].refs.push_back(raw[i].second);
    }
  }
  return out;
}

// ---- Vocabulary -----------------------------------------------------------------------

Vocabulary::Vocabulary() {
  for (const char* tok : {kPadToken, kBosToken, kEosToken, kUnkToken}) add(tok);
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary " + path);
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < 4) {
      if (line != v.tokens_[n]) {
        throw ParseError(path + ": line " + std::to_string(n) +
                         " must be the reserved token " + v.tokens_[n]);
      }
    } else {
      if (v.contains(line)) throw ParseError(path + ": duplicate token " + line);
      v.add(line);
    }
    ++n;
  }
  if (n < 4) throw ParseError(path + ": missing reserved tokens");
  return v;
}

Vocabulary build_vocab(std::span<const DelexicalizedPair> pairs,
                       std::size_t min_count) {
  if (min_count < 1) throw UsageError("build_vocab: min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  static const std::set<std::string> reserved = {kPadToken, kBosToken, kEosToken,
                                                 kUnkToken};
  for (const auto& p : pairs) {
    for (const auto& t : p.input_tokens) {
      if (!reserved.count(t)) ++counts[t];
    }
    for (const auto& t : p.target_tokens) {
      if (!reserved.count(t)) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, count] : items) {
    if (count >= min_count) v.add(tok);
  }
  return v;
}

// ---- Prepared-pair persistence ------------------------------------------------------------

void write_pairs_jsonl(const std::string& path,
                       std::span<const std::string> mr_texts,
                       std::span<const DelexicalizedPair> pairs) {
  if (mr_texts.size() != pairs.size()) {
    throw UsageError("write_pairs_jsonl: length mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    nlohmann::json j;
    j["mr"] = mr_texts[i];
    j["input"] = pairs[i].input_tokens;
    j["target"] = pairs[i].target_tokens;
    j["subs"] = pairs[i].substitutions;
    out << j.dump() << "\n";
  }
}

std::vector<StoredPair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<StoredPair> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": line " + std::to_string(n) + ": " + e.what());
    }
    StoredPair sp;
    sp.mr_text = j.at("mr").get<std::string>();
    sp.pair.input_tokens = j.at("input").get<std::vector<std::string>>();
    sp.pair.target_tokens = j.at("target").get<std::vector<std::string>>();
    sp.pair.substitutions =
        j.at("subs").get<std::map<std::string, std::string>>();
    out.push_back(std::move(sp));
  }
  return out;
}

}  // namespace advnlg
