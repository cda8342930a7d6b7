#include <doctest.h>

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmcl/augment.hpp"

using namespace mmcl;

namespace {

Utterance make_utt(std::vector<std::string> tokens, std::vector<std::string> tags,
                   std::vector<std::string> intents) {
  return Utterance{std::move(tokens), std::move(tags), std::move(intents)};
}

std::vector<Utterance> synthetic_corpus() {
  return {
      make_utt({"fly", "to", "boston"}, {"O", "O", "B-city"}, {"BOOK"}),
      make_utt({"new", "york", "please"}, {"B-city", "I-city", "O"}, {"BOOK"}),
      make_utt({"delta", "from", "denver"}, {"B-airline", "O", "B-city"},
               {"BOOK", "AIRLINE"}),
      make_utt({"morning", "flights"}, {"B-time", "O"}, {"LIST"}),
  };
}

// Resolves what a RepRef points at, for rule re-derivation.
struct BatchView {
  std::vector<const Utterance*> utts;
  std::vector<const std::vector<SlotSpan>*> chunks;

  BatchView(const std::vector<Utterance>& bases,
            const std::vector<PositiveUtterance>& positives) {
    for (std::size_t i = 0; i < bases.size(); ++i) {
      utts.push_back(&bases[i]);
      chunks.push_back(&positives[i].base_chunks);
    }
    for (const PositiveUtterance& p : positives) {
      utts.push_back(&p.utterance);
      chunks.push_back(&p.positive_chunks);
    }
  }

  std::string token_suffix(const RepRef& r) const {
    const std::string& tag =
        utts[static_cast<std::size_t>(r.utt)]->slot_tags[static_cast<std::size_t>(r.index)];
    return tag == "O" ? std::string() : tag.substr(2);
  }
  const SlotSpan& chunk(const RepRef& r) const {
    return (*chunks[static_cast<std::size_t>(r.utt)])[static_cast<std::size_t>(r.index)];
  }
};

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("single-phrase dictionary forces the replacement") {
  Utterance u = make_utt({"fly", "to", "boston"}, {"O", "O", "B-city"}, {"BOOK"});
  SlotDictionary dict;
  dict.phrases["city"] = {{"denver"}};
  std::mt19937_64 rng(1);
  PositiveUtterance p = generate_positive(u, dict, rng);
  CHECK(p.utterance.tokens == std::vector<std::string>{"fly", "to", "denver"});
  CHECK(p.utterance.slot_tags == std::vector<std::string>{"O", "O", "B-city"});
  CHECK(p.utterance.intents == u.intents);
}

TEST_CASE("multi-word replacement re-emits B/I tags and grows the utterance") {
  Utterance u = make_utt({"fly", "to", "boston"}, {"O", "O", "B-city"}, {"BOOK"});
  SlotDictionary dict;
  dict.phrases["city"] = {{"new", "york"}};
  std::mt19937_64 rng(1);
  PositiveUtterance p = generate_positive(u, dict, rng);
  CHECK(p.utterance.tokens ==
        std::vector<std::string>{"fly", "to", "new", "york"});
  CHECK(p.utterance.slot_tags ==
        std::vector<std::string>{"O", "O", "B-city", "I-city"});
  CHECK(p.utterance.length() == u.length() + 1);
}

TEST_CASE("a slot type missing from the dictionary is kept, not fatal") {
  Utterance u = make_utt({"boston", "late"}, {"B-city", "B-time"}, {"BOOK"});
  SlotDictionary dict;
  dict.phrases["city"] = {{"denver"}};
  std::mt19937_64 rng(3);
  int missing = 0;
  PositiveUtterance p = generate_positive(u, dict, rng, &missing);
  CHECK(missing == 1);
  CHECK(p.utterance.tokens == std::vector<std::string>{"denver", "late"});
  CHECK(p.utterance.slot_tags == u.slot_tags);
}

TEST_CASE("multiplicity-weighted sampling over 1000 draws") {
  Utterance u = make_utt({"go", "boston"}, {"O", "B-city"}, {"BOOK"});
  SlotDictionary dict;
  dict.phrases["city"] = {{"a"}, {"a"}, {"b"}};
  std::mt19937_64 rng(7);
  int a_count = 0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    PositiveUtterance p = generate_positive(u, dict, rng);
    if (p.utterance.tokens[1] == "a") ++a_count;
  }
  const double freq = static_cast<double>(a_count) / draws;
  CHECK(std::abs(freq - 2.0 / 3.0) < 0.05);
}

TEST_CASE("generate_positive preserves intents, chunk types and O count") {
  std::vector<Utterance> corpus = synthetic_corpus();
  SlotDictionary dict = build_slot_dictionary(corpus);
  std::mt19937_64 rng(11);
  for (int draw = 0; draw < 1000; ++draw) {
    const Utterance& u = corpus[static_cast<std::size_t>(draw) % corpus.size()];
    PositiveUtterance p = generate_positive(u, dict, rng);

    CHECK(p.utterance.intents == u.intents);

    std::vector<SlotSpan> base_chunks = extract_chunks(u.slot_tags);
    std::vector<SlotSpan> pos_chunks = extract_chunks(p.utterance.slot_tags);
    REQUIRE(base_chunks.size() == pos_chunks.size());
    for (std::size_t c = 0; c < base_chunks.size(); ++c) {
      CHECK(base_chunks[c].slot_type == pos_chunks[c].slot_type);
    }

    const auto count_o = [](const Utterance& x) {
      int n = 0;
      for (const std::string& t : x.slot_tags) n += (t == "O");
      return n;
    };
    CHECK(count_o(u) == count_o(p.utterance));
  }
}

TEST_CASE("batch of two gives each coarse anchor exactly one negative") {
  std::vector<Utterance> bases = {synthetic_corpus()[0], synthetic_corpus()[2]};
  SlotDictionary dict = build_slot_dictionary(bases);
  std::mt19937_64 rng(13);
  std::vector<PositiveUtterance> positives;
  for (const Utterance& u : bases) positives.push_back(generate_positive(u, dict, rng));
  ContrastiveBatch batch = build_batch_pairs(bases, positives, rng, 8);
  REQUIRE(batch.coarse_utt.size() == 2);
  for (const ContrastivePair& p : batch.coarse_utt) {
    CHECK(p.negatives.size() == 1);
    CHECK(p.positive.utt == p.anchor.utt + 2);
  }
}

TEST_CASE("word level follows the same-suffix rule") {
  // boston(B-city) with denver(B-city) and delta(B-airline) in the batch.
  std::vector<Utterance> bases = {
      make_utt({"boston"}, {"B-city"}, {"BOOK"}),
      make_utt({"denver", "delta"}, {"B-city", "B-airline"}, {"BOOK"}),
  };
  // Identity dictionary so positives replicate the bases.
  SlotDictionary dict;
  dict.phrases["city"];  // empty entries leave chunks unreplaced
  std::mt19937_64 rng(17);
  std::vector<PositiveUtterance> positives;
  for (const Utterance& u : bases) positives.push_back(generate_positive(u, dict, rng));
  ContrastiveBatch batch = build_batch_pairs(bases, positives, rng, 8);
  BatchView view(bases, positives);

  bool saw_boston = false;
  for (const ContrastivePair& p : batch.word) {
    if (p.anchor.utt == 0 && p.anchor.index == 0) {
      saw_boston = true;
      CHECK(view.token_suffix(p.positive) == "city");
      for (const RepRef& n : p.negatives) {
        CHECK(view.token_suffix(n) == "airline");
      }
      CHECK(!p.negatives.empty());
    }
  }
  CHECK(saw_boston);
}

TEST_CASE("pair construction matches exhaustive enumeration on a fixed batch") {
  std::vector<Utterance> bases = synthetic_corpus();
  SlotDictionary dict = build_slot_dictionary(bases);
  std::mt19937_64 rng(19);
  std::vector<PositiveUtterance> positives;
  for (const Utterance& u : bases) positives.push_back(generate_positive(u, dict, rng));
  const int k_neg = 8;
  ContrastiveBatch batch = build_batch_pairs(bases, positives, rng, k_neg);
  BatchView view(bases, positives);
  const int B = static_cast<int>(bases.size());

  // Coarse: one pair per base, negatives exactly the other bases.
  REQUIRE(batch.coarse_utt.size() == bases.size());
  for (int i = 0; i < B; ++i) {
    const ContrastivePair& p = batch.coarse_utt[static_cast<std::size_t>(i)];
    CHECK(p.anchor == RepRef{RepRef::Kind::kUtterance, i, 0});
    CHECK(p.positive == RepRef{RepRef::Kind::kUtterance, B + i, 0});
    std::set<int> negs;
    for (const RepRef& n : p.negatives) {
      CHECK(n.kind == RepRef::Kind::kUtterance);
      negs.insert(n.utt);
    }
    std::set<int> expected;
    for (int j = 0; j < B; ++j) {
      if (j != i) expected.insert(j);
    }
    CHECK(negs == expected);
  }

  // Fine: one pair per base token; the positive obeys the alignment rule.
  std::size_t total_tokens = 0;
  for (const Utterance& u : bases) total_tokens += static_cast<std::size_t>(u.length());
  REQUIRE(batch.fine_utt.size() == total_tokens);
  for (const ContrastivePair& p : batch.fine_utt) {
    const int i = p.anchor.utt;
    const Utterance& base = bases[static_cast<std::size_t>(i)];
    const PositiveUtterance& pos = positives[static_cast<std::size_t>(i)];
    const std::string& tag = base.slot_tags[static_cast<std::size_t>(p.anchor.index)];
    if (tag == "O") {
      // k-th O of the base maps to the k-th O of the positive.
      int k = 0;
      for (int t = 0; t < p.anchor.index; ++t) {
        k += (base.slot_tags[static_cast<std::size_t>(t)] == "O");
      }
      int seen = -1, mapped = -1;
      for (int t = 0; t < pos.utterance.length(); ++t) {
        if (pos.utterance.slot_tags[static_cast<std::size_t>(t)] == "O" && ++seen == k) {
          mapped = t;
          break;
        }
      }
      CHECK(p.positive == RepRef{RepRef::Kind::kToken, B + i, mapped});
    } else {
      // Inside chunk c: same-length chunks map token-wise, others to the mean.
      int c = -1;
      for (std::size_t ci = 0; ci < pos.base_chunks.size(); ++ci) {
        if (pos.base_chunks[ci].start <= p.anchor.index &&
            p.anchor.index <= pos.base_chunks[ci].end) {
          c = static_cast<int>(ci);
        }
      }
      REQUIRE(c >= 0);
      const SlotSpan& bc = pos.base_chunks[static_cast<std::size_t>(c)];
      const SlotSpan& pc = pos.positive_chunks[static_cast<std::size_t>(c)];
      if (bc.length() == pc.length()) {
        CHECK(p.positive == RepRef{RepRef::Kind::kToken, B + i,
                                   pc.start + (p.anchor.index - bc.start)});
      } else {
        CHECK(p.positive == RepRef{RepRef::Kind::kChunkMean, B + i, c});
      }
    }
    for (const RepRef& n : p.negatives) {
      CHECK(n.utt != i);
      CHECK(n.utt != B + i);
    }
    CHECK(p.negatives.size() ==
          std::min<std::size_t>(k_neg, [&] {
            std::size_t pool = 0;
            for (int v = 0; v < 2 * B; ++v) {
              if (v == i || v == B + i) continue;
              pool += static_cast<std::size_t>(view.utts[static_cast<std::size_t>(v)]->length());
            }
            return pool;
          }()));
  }

  // Slot: one pair per base chunk; negatives typed differently.
  std::size_t total_chunks = 0;
  for (const PositiveUtterance& p : positives) total_chunks += p.base_chunks.size();
  REQUIRE(batch.slot.size() == total_chunks);
  for (const ContrastivePair& p : batch.slot) {
    CHECK(p.anchor.kind == RepRef::Kind::kChunkMean);
    CHECK(p.positive == RepRef{RepRef::Kind::kChunkMean, p.anchor.utt + B,
                               p.anchor.index});
    const std::string type = view.chunk(p.anchor).slot_type;
    CHECK(view.chunk(p.positive).slot_type == type);
    for (const RepRef& n : p.negatives) {
      CHECK(view.chunk(n).slot_type != type);
    }
  }

  // Word: anchors are exactly the non-O base tokens with a same-suffix
  // partner somewhere else in the batch.
  std::size_t expected_word_anchors = 0;
  for (int i = 0; i < B; ++i) {
    for (int t = 0; t < bases[static_cast<std::size_t>(i)].length(); ++t) {
      const RepRef anchor{RepRef::Kind::kToken, i, t};
      const std::string suffix = view.token_suffix(anchor);
      if (suffix.empty()) continue;
      bool partner = false;
      for (int v = 0; v < 2 * B && !partner; ++v) {
        for (int t2 = 0; t2 < view.utts[static_cast<std::size_t>(v)]->length(); ++t2) {
          if (v == i && t2 == t) continue;
          if (view.token_suffix({RepRef::Kind::kToken, v, t2}) == suffix) {
            partner = true;
            break;
          }
        }
      }
      expected_word_anchors += partner;
    }
  }
  CHECK(batch.word.size() == expected_word_anchors);
  for (const ContrastivePair& p : batch.word) {
    const std::string suffix = view.token_suffix(p.anchor);
    CHECK(!suffix.empty());
    CHECK(view.token_suffix(p.positive) == suffix);
    CHECK(!(p.positive == p.anchor));
    for (const RepRef& n : p.negatives) {
      CHECK(view.token_suffix(n) != suffix);
      CHECK(!view.token_suffix(n).empty());
      CHECK(!(n == p.anchor));
    }
  }
}

TEST_CASE("anchors never appear in their own negative lists") {
  std::vector<Utterance> bases = synthetic_corpus();
  SlotDictionary dict = build_slot_dictionary(bases);
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<PositiveUtterance> positives;
    for (const Utterance& u : bases) {
      positives.push_back(generate_positive(u, dict, rng));
    }
    ContrastiveBatch batch = build_batch_pairs(bases, positives, rng, 4);
    for (const auto* level :
         {&batch.coarse_utt, &batch.fine_utt, &batch.slot, &batch.word}) {
      for (const ContrastivePair& p : *level) {
        for (const RepRef& n : p.negatives) CHECK(!(n == p.anchor));
      }
    }
  }
}

TEST_CASE("pair construction is deterministic for a fixed seed") {
  std::vector<Utterance> bases = synthetic_corpus();
  SlotDictionary dict = build_slot_dictionary(bases);
  auto run = [&]() {
    std::mt19937_64 rng(123);
    std::vector<PositiveUtterance> positives;
    for (const Utterance& u : bases) {
      positives.push_back(generate_positive(u, dict, rng));
    }
    return build_batch_pairs(bases, positives, rng, 8);
  };
  ContrastiveBatch a = run(), b = run();
  CHECK(a.coarse_utt == b.coarse_utt);
  CHECK(a.fine_utt == b.fine_utt);
  CHECK(a.slot == b.slot);
  CHECK(a.word == b.word);
}

TEST_CASE("pair manifest emits one json record per pair") {
  std::vector<Utterance> bases = {synthetic_corpus()[0], synthetic_corpus()[2]};
  SlotDictionary dict = build_slot_dictionary(bases);
  std::mt19937_64 rng(5);
  std::vector<PositiveUtterance> positives;
  for (const Utterance& u : bases) positives.push_back(generate_positive(u, dict, rng));
  ContrastiveBatch batch = build_batch_pairs(bases, positives, rng, 2);
  const std::string manifest = pair_manifest_json(batch);
  const std::size_t lines = std::count(manifest.begin(), manifest.end(), '\n');
  CHECK(lines == batch.coarse_utt.size() + batch.fine_utt.size() +
                     batch.slot.size() + batch.word.size());
  CHECK(manifest.find("\"level\":\"slot\"") != std::string::npos);
}

}  // TEST_SUITE augment
