#include "mmcl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mmcl {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  std::string field;
  while (is >> field) fields.push_back(std::move(field));
  return fields;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

Utterance finish_block(const std::vector<std::pair<int, std::string>>& lines) {
  // A block is token lines followed by one intent line.
  const auto& [intent_lineno, intent_line] = lines.back();
  if (split_ws(intent_line).size() != 1) {
    throw ParseError("line " + std::to_string(intent_lineno) +
                     ": expected an intent line to close the block, got a "
                     "token/tag pair");
  }
  if (lines.size() < 2) {
    throw ParseError("line " + std::to_string(intent_lineno) +
                     ": block has no token lines");
  }
  Utterance u;
  for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
    const auto& [lineno, line] = lines[i];
    std::vector<std::string> fields = split_ws(line);
    if (fields.size() != 2) {
      throw ParseError("line " + std::to_string(lineno) +
                       ": expected 'token slot-tag', got " +
                       std::to_string(fields.size()) + " fields");
    }
    u.tokens.push_back(std::move(fields[0]));
    u.slot_tags.push_back(std::move(fields[1]));
  }
  std::string intent_field = split_ws(intent_line)[0];
  std::set<std::string> intents;
  std::size_t pos = 0;
  while (pos <= intent_field.size()) {
    const std::size_t hash = intent_field.find('#', pos);
    const std::string label = intent_field.substr(
        pos, hash == std::string::npos ? std::string::npos : hash - pos);
    if (!label.empty()) intents.insert(label);
    if (hash == std::string::npos) break;
    pos = hash + 1;
  }
  if (intents.empty()) {
    throw ParseError("line " + std::to_string(intent_lineno) + ": empty intent set");
  }
  u.intents.assign(intents.begin(), intents.end());
  return u;
}

}  // namespace

std::size_t SlotDictionary::total_phrases() const {
  std::size_t n = 0;
  for (const auto& [type, list] : phrases) n += list.size();
  return n;
}

std::vector<Utterance> parse_dataset(const std::string& text) {
  std::vector<Utterance> utterances;
  std::vector<std::pair<int, std::string>> block;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (is_blank(line)) {
      if (!block.empty()) {
        utterances.push_back(finish_block(block));
        block.clear();
      }
      continue;
    }
    block.emplace_back(lineno, line);
  }
  if (!block.empty()) utterances.push_back(finish_block(block));
  return utterances;
}

std::vector<Utterance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::vector<SlotSpan> extract_chunks(const std::vector<std::string>& slot_tags) {
  std::vector<SlotSpan> spans;
  std::optional<SlotSpan> open;
  auto close = [&]() {
    if (open) {
      spans.push_back(std::move(*open));
      open.reset();
    }
  };
  for (int i = 0; i < static_cast<int>(slot_tags.size()); ++i) {
    const std::string& tag = slot_tags[static_cast<std::size_t>(i)];
    if (tag == "O") {
      close();
    } else if (tag.rfind("B-", 0) == 0) {
      close();
      open = SlotSpan{tag.substr(2), i, i, {}};
    } else if (tag.rfind("I-", 0) == 0) {
      const std::string type = tag.substr(2);
      if (open && open->slot_type == type) {
        open->end = i;
      } else {
        close();  // orphan I- opens a fresh chunk
        open = SlotSpan{type, i, i, {}};
      }
    } else {
      throw TagError("malformed slot tag '" + tag + "' at position " +
                     std::to_string(i));
    }
  }
  close();
  return spans;
}

std::vector<SlotSpan> extract_chunks(const std::vector<std::string>& slot_tags,
                                     const std::vector<std::string>& tokens) {
  if (slot_tags.size() != tokens.size()) {
    throw ContractError("extract_chunks: " + std::to_string(tokens.size()) +
                        " tokens vs " + std::to_string(slot_tags.size()) + " tags");
  }
  std::vector<SlotSpan> spans = extract_chunks(slot_tags);
  for (SlotSpan& s : spans) {
    s.surface.assign(tokens.begin() + s.start, tokens.begin() + s.end + 1);
  }
  return spans;
}

std::vector<std::string> chunks_to_tags(const std::vector<SlotSpan>& spans, int n) {
  std::vector<std::string> tags(static_cast<std::size_t>(n), "O");
  for (const SlotSpan& s : spans) {
    tags[static_cast<std::size_t>(s.start)] = "B-" + s.slot_type;
    for (int i = s.start + 1; i <= s.end; ++i) {
      tags[static_cast<std::size_t>(i)] = "I-" + s.slot_type;
    }
  }
  return tags;
}

SlotDictionary build_slot_dictionary(const std::vector<Utterance>& utterances,
                                     bool dedup) {
  SlotDictionary dict;
  for (const Utterance& u : utterances) {
    for (SlotSpan& s : extract_chunks(u.slot_tags, u.tokens)) {
      dict.phrases[s.slot_type].push_back(std::move(s.surface));
    }
  }
  if (dedup) {
    for (auto& [type, list] : dict.phrases) {
      std::vector<std::vector<std::string>> unique;
      for (auto& phrase : list) {
        if (std::find(unique.begin(), unique.end(), phrase) == unique.end()) {
          unique.push_back(std::move(phrase));
        }
      }
      list = std::move(unique);
    }
  }
  return dict;
}

Vocabulary::Vocabulary() {
  add_word(kPadToken);
  add_word(kUnkToken);
}

int Vocabulary::add_word(const std::string& w) {
  auto [it, inserted] = word_ids_.try_emplace(w, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(w);
  return it->second;
}

int Vocabulary::add_slot_tag(const std::string& t) {
  auto [it, inserted] =
      slot_tag_ids_.try_emplace(t, static_cast<int>(slot_tags_.size()));
  if (inserted) slot_tags_.push_back(t);
  return it->second;
}

int Vocabulary::add_intent(const std::string& i) {
  auto [it, inserted] = intent_ids_.try_emplace(i, static_cast<int>(intents_.size()));
  if (inserted) intents_.push_back(i);
  return it->second;
}

int Vocabulary::word_id(const std::string& w) const {
  auto it = word_ids_.find(w);
  return it == word_ids_.end() ? kUnkId : it->second;
}

std::optional<int> Vocabulary::find_slot_tag(const std::string& t) const {
  auto it = slot_tag_ids_.find(t);
  if (it == slot_tag_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Vocabulary::find_intent(const std::string& i) const {
  auto it = intent_ids_.find(i);
  if (it == intent_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::word_at(int id) const {
  return words_.at(static_cast<std::size_t>(id));
}
const std::string& Vocabulary::slot_tag_at(int id) const {
  return slot_tags_.at(static_cast<std::size_t>(id));
}
const std::string& Vocabulary::intent_at(int id) const {
  return intents_.at(static_cast<std::size_t>(id));
}

Vocabulary build_vocabularies(const std::vector<Utterance>& train) {
  if (train.empty()) throw ContractError("build_vocabularies: empty training set");
  Vocabulary vocab;
  for (const Utterance& u : train) {
    for (const std::string& w : u.tokens) vocab.add_word(w);
    for (const std::string& t : u.slot_tags) vocab.add_slot_tag(t);
    for (const std::string& i : u.intents) vocab.add_intent(i);
  }
  return vocab;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ContractError("vocabulary: cannot open for write: " + path);
  out << "words " << vocab.word_count() << "\n";
  for (int i = 0; i < vocab.word_count(); ++i) out << vocab.word_at(i) << "\n";
  out << "slot_tags " << vocab.slot_tag_count() << "\n";
  for (int i = 0; i < vocab.slot_tag_count(); ++i) out << vocab.slot_tag_at(i) << "\n";
  out << "intents " << vocab.intent_count() << "\n";
  for (int i = 0; i < vocab.intent_count(); ++i) out << vocab.intent_at(i) << "\n";
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("vocabulary: cannot open for read: " + path);
  Vocabulary vocab;
  std::string section;
  int count = 0;
  auto read_section = [&](const std::string& expected, auto&& add) {
    in >> section >> count;
    if (!in || section != expected) {
      throw ContractError("vocabulary: malformed file, expected section " + expected);
    }
    in.ignore();
    for (int i = 0; i < count; ++i) {
      std::string entry;
      std::getline(in, entry);
      add(entry, i);
    }
  };
  read_section("words", [&](const std::string& w, int i) {
    if (i < 2) {  // reserved padding/unknown rows written by save_vocabulary
      if (w != vocab.word_at(i)) {
        throw ContractError("vocabulary: reserved ids corrupted");
      }
    } else if (vocab.add_word(w) != i) {
      throw ContractError("vocabulary: word ids not dense");
    }
  });
  read_section("slot_tags", [&](const std::string& t, int) { vocab.add_slot_tag(t); });
  read_section("intents", [&](const std::string& l, int) { vocab.add_intent(l); });
  return vocab;
}

std::string format_utterance(const Utterance& u) {
  std::ostringstream os;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    os << u.tokens[i] << ' ' << u.slot_tags[i] << '\n';
  }
  for (std::size_t i = 0; i < u.intents.size(); ++i) {
    if (i) os << '#';
    os << u.intents[i];
  }
  os << '\n';
  return os.str();
}

}  // namespace mmcl
