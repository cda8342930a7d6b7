#pragma once

// Synthetic multi-intent corpus shared by the trainer tests and the
// acceptance suite: 4 intents, 6 slot types, utterances of at most 9 tokens.

#include <random>
#include <string>
#include <vector>

#include "mmcl/corpus.hpp"

namespace mmcl_test {

struct SlotTypeSpec {
  std::string type;
  std::string intent;
  std::vector<std::vector<std::string>> phrases;
};

inline const std::vector<SlotTypeSpec>& slot_type_specs() {
  static const std::vector<SlotTypeSpec> specs = {
      {"city", "BOOK", {{"boston"}, {"denver"}, {"new", "york"}}},
      {"airline", "AIRLINE", {{"delta"}, {"united"}}},
      {"time", "WHEN", {{"morning"}, {"late", "night"}}},
      {"day", "WHEN", {{"monday"}, {"friday"}}},
      {"meal", "FOOD", {{"dinner"}, {"breakfast"}}},
      {"class", "FOOD", {{"first", "class"}, {"coach"}}},
  };
  return specs;
}

inline std::vector<mmcl::Utterance> synthetic_corpus(unsigned seed = 7,
                                                     int count = 32) {
  static const std::vector<std::string> filler = {"show", "me",  "flights", "from",
                                                  "to",   "on",  "please",  "the"};
  std::mt19937_64 rng(seed);
  const auto& specs = slot_type_specs();
  std::vector<mmcl::Utterance> corpus;
  for (int i = 0; i < count; ++i) {
    mmcl::Utterance u;
    const int n_chunks = 1 + static_cast<int>(rng() % 2);
    std::vector<std::string> intents;
    for (int c = 0; c < n_chunks; ++c) {
      const int lead = static_cast<int>(rng() % 3);
      for (int k = 0; k < lead && u.tokens.size() < 6; ++k) {
        u.tokens.push_back(filler[rng() % filler.size()]);
        u.slot_tags.push_back("O");
      }
      const SlotTypeSpec& spec = specs[rng() % specs.size()];
      const auto& phrase = spec.phrases[rng() % spec.phrases.size()];
      for (std::size_t k = 0; k < phrase.size() && u.tokens.size() < 8; ++k) {
        u.tokens.push_back(phrase[k]);
        u.slot_tags.push_back((k == 0 ? "B-" : "I-") + spec.type);
      }
      intents.push_back(spec.intent);
    }
    if (u.tokens.size() < 9 && rng() % 2 == 0) {
      u.tokens.push_back(filler[rng() % filler.size()]);
      u.slot_tags.push_back("O");
    }
    std::sort(intents.begin(), intents.end());
    intents.erase(std::unique(intents.begin(), intents.end()), intents.end());
    u.intents = std::move(intents);
    corpus.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace mmcl_test
