#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmcl/errors.hpp"

namespace mmcl {

/// One multi-intent example: tokens, aligned BIO slot tags, and the gold
/// intent set (sorted, de-duplicated).
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<std::string> slot_tags;
  std::vector<std::string> intents;

  int length() const { return static_cast<int>(tokens.size()); }
};

/// Maximal phrase under one slot type: B- through the last I-.
struct SlotSpan {
  std::string slot_type;
  int start = 0;
  int end = 0;  // inclusive
  std::vector<std::string> surface;

  int length() const { return end - start + 1; }
  bool operator==(const SlotSpan& other) const = default;
};

/// slot type -> surface phrases observed under it, multiplicity retained.
struct SlotDictionary {
  std::map<std::string, std::vector<std::vector<std::string>>> phrases;

  bool has(const std::string& slot_type) const {
    auto it = phrases.find(slot_type);
    return it != phrases.end() && !it->second.empty();
  }
  std::size_t total_phrases() const;
};

/// Bijective word/slot-tag/intent id maps with reserved padding and unknown
/// word ids. Ids are dense from 0 in first-appearance order.
class Vocabulary {
public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<PAD>";
  static constexpr const char* kUnkToken = "<UNK>";

  int add_word(const std::string& w);
  int add_slot_tag(const std::string& t);
  int add_intent(const std::string& i);

  /// Unknown words map to the unknown id.
  int word_id(const std::string& w) const;
  std::optional<int> find_slot_tag(const std::string& t) const;
  std::optional<int> find_intent(const std::string& i) const;

  const std::string& word_at(int id) const;
  const std::string& slot_tag_at(int id) const;
  const std::string& intent_at(int id) const;

  int word_count() const { return static_cast<int>(words_.size()); }
  int slot_tag_count() const { return static_cast<int>(slot_tags_.size()); }
  int intent_count() const { return static_cast<int>(intents_.size()); }

  Vocabulary();

private:
  std::vector<std::string> words_, slot_tags_, intents_;
  std::unordered_map<std::string, int> word_ids_, slot_tag_ids_, intent_ids_;
};

/// Parses AGIF-layout text: blocks of "token<ws>slot-tag" lines closed by a
/// line of '#'-joined intents, blocks separated by blank lines.
std::vector<Utterance> parse_dataset(const std::string& text);
std::vector<Utterance> load_dataset(const std::string& path);

/// Maximal BIO chunks; an orphan I-x opens a chunk (conlleval convention).
std::vector<SlotSpan> extract_chunks(const std::vector<std::string>& slot_tags);
std::vector<SlotSpan> extract_chunks(const std::vector<std::string>& slot_tags,
                                     const std::vector<std::string>& tokens);

/// Re-emits B-/I-/O tags for a span set over a length-n sequence.
std::vector<std::string> chunks_to_tags(const std::vector<SlotSpan>& spans, int n);

SlotDictionary build_slot_dictionary(const std::vector<Utterance>& utterances,
                                     bool dedup = false);

Vocabulary build_vocabularies(const std::vector<Utterance>& train);

void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path);

std::string format_utterance(const Utterance& u);

}  // namespace mmcl
