#include "mmcl/augment.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace mmcl {

namespace {

using nlohmann::json;

// Uniform index into [0, n); multiplicity-weighted sampling falls out of
// drawing positions rather than distinct values.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(rng);
}

template <typename T>
std::vector<T> sample_up_to(std::vector<T> pool, std::mt19937_64& rng,
                            std::size_t count) {
  if (pool.size() <= count) return pool;
  // Partial Fisher-Yates keeps draws deterministic for a fixed seed.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + draw_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

json ref_json(const RepRef& r) {
  const char* kind = r.kind == RepRef::Kind::kUtterance ? "utterance"
                     : r.kind == RepRef::Kind::kToken   ? "token"
                                                        : "chunk";
  json j = {{"kind", kind}, {"utt", r.utt}};
  if (r.kind != RepRef::Kind::kUtterance) j["index"] = r.index;
  return j;
}

void append_level(json& out, const char* level,
                  const std::vector<ContrastivePair>& pairs) {
  for (const ContrastivePair& p : pairs) {
    json rec = {{"level", level},
                {"anchor", ref_json(p.anchor)},
                {"positive", ref_json(p.positive)},
                {"negatives", json::array()}};
    for (const RepRef& n : p.negatives) rec["negatives"].push_back(ref_json(n));
    out.push_back(std::move(rec));
  }
}

}  // namespace

PositiveUtterance generate_positive(const Utterance& u, const SlotDictionary& dict,
                                    std::mt19937_64& rng, int* missing_type_count) {
  PositiveUtterance out;
  out.base = u;
  out.base_chunks = extract_chunks(u.slot_tags, u.tokens);
  out.utterance.intents = u.intents;

  std::vector<std::string>& tokens = out.utterance.tokens;
  std::vector<std::string>& tags = out.utterance.slot_tags;
  int cursor = 0;
  for (const SlotSpan& chunk : out.base_chunks) {
    for (; cursor < chunk.start; ++cursor) {
      tokens.push_back(u.tokens[static_cast<std::size_t>(cursor)]);
      tags.push_back("O");
    }
    const std::vector<std::string>* replacement = &chunk.surface;
    auto it = dict.phrases.find(chunk.slot_type);
    if (it != dict.phrases.end() && !it->second.empty()) {
      replacement = &it->second[draw_index(rng, it->second.size())];
    } else if (missing_type_count) {
      ++*missing_type_count;
    }
    SlotSpan placed;
    placed.slot_type = chunk.slot_type;
    placed.start = static_cast<int>(tokens.size());
    for (std::size_t k = 0; k < replacement->size(); ++k) {
      tokens.push_back((*replacement)[k]);
      tags.push_back((k == 0 ? "B-" : "I-") + chunk.slot_type);
    }
    placed.end = static_cast<int>(tokens.size()) - 1;
    placed.surface = *replacement;
    out.positive_chunks.push_back(std::move(placed));
    cursor = chunk.end + 1;
  }
  for (; cursor < u.length(); ++cursor) {
    tokens.push_back(u.tokens[static_cast<std::size_t>(cursor)]);
    tags.push_back("O");
  }
  return out;
}

ContrastiveBatch build_batch_pairs(std::span<const Utterance> bases,
                                   std::span<const PositiveUtterance> positives,
                                   std::mt19937_64& rng, int negatives_per_anchor) {
  const int batch = static_cast<int>(bases.size());
  if (batch < 2) {
    throw ContractError("build_batch_pairs: need at least 2 base utterances");
  }
  if (positives.size() != bases.size()) {
    throw ContractError("build_batch_pairs: every base needs exactly one positive");
  }
  const std::size_t keep = static_cast<std::size_t>(std::max(0, negatives_per_anchor));

  // Tokens and chunks of every batch utterance; 0..B-1 bases, B..2B-1 positives.
  struct UttView {
    const Utterance* utt;
    const std::vector<SlotSpan>* chunks;
  };
  std::vector<UttView> views;
  for (int i = 0; i < batch; ++i) views.push_back({&bases[i], &positives[i].base_chunks});
  for (int i = 0; i < batch; ++i) {
    views.push_back({&positives[i].utterance, &positives[i].positive_chunks});
  }

  ContrastiveBatch out;

  // Coarse utterance level: the positive copy attracts, every other base repels.
  for (int i = 0; i < batch; ++i) {
    ContrastivePair pair;
    pair.anchor = {RepRef::Kind::kUtterance, i, 0};
    pair.positive = {RepRef::Kind::kUtterance, batch + i, 0};
    for (int j = 0; j < batch; ++j) {
      if (j != i) pair.negatives.push_back({RepRef::Kind::kUtterance, j, 0});
    }
    out.coarse_utt.push_back(std::move(pair));
  }

  // Fine utterance level: each base token aligns with its counterpart in the
  // positive; a substituted chunk of different length aligns to the chunk mean.
  for (int i = 0; i < batch; ++i) {
    const Utterance& base = bases[i];
    const PositiveUtterance& pos = positives[i];

    std::vector<RepRef> aligned(static_cast<std::size_t>(base.length()));
    {
      // O positions map 1:1 in order.
      std::vector<int> base_o, pos_o;
      for (int t = 0; t < base.length(); ++t) {
        if (base.slot_tags[static_cast<std::size_t>(t)] == "O") base_o.push_back(t);
      }
      for (int t = 0; t < pos.utterance.length(); ++t) {
        if (pos.utterance.slot_tags[static_cast<std::size_t>(t)] == "O") {
          pos_o.push_back(t);
        }
      }
      for (std::size_t k = 0; k < base_o.size(); ++k) {
        aligned[static_cast<std::size_t>(base_o[k])] = {RepRef::Kind::kToken,
                                                        batch + i, pos_o[k]};
      }
      for (std::size_t c = 0; c < pos.base_chunks.size(); ++c) {
        const SlotSpan& bc = pos.base_chunks[c];
        const SlotSpan& pc = pos.positive_chunks[c];
        for (int t = bc.start; t <= bc.end; ++t) {
          if (bc.length() == pc.length()) {
            aligned[static_cast<std::size_t>(t)] = {
                RepRef::Kind::kToken, batch + i, pc.start + (t - bc.start)};
          } else {
            aligned[static_cast<std::size_t>(t)] = {RepRef::Kind::kChunkMean,
                                                    batch + i, static_cast<int>(c)};
          }
        }
      }
    }

    std::vector<RepRef> negative_pool;
    for (int v = 0; v < 2 * batch; ++v) {
      if (v == i || v == batch + i) continue;
      for (int t = 0; t < views[static_cast<std::size_t>(v)].utt->length(); ++t) {
        negative_pool.push_back({RepRef::Kind::kToken, v, t});
      }
    }
    for (int t = 0; t < base.length(); ++t) {
      ContrastivePair pair;
      pair.anchor = {RepRef::Kind::kToken, i, t};
      pair.positive = aligned[static_cast<std::size_t>(t)];
      pair.negatives = sample_up_to(negative_pool, rng, keep);
      out.fine_utt.push_back(std::move(pair));
    }
  }

  // Slot level: anchor chunks attract their replacement chunk and repel
  // chunks under other slot types anywhere in the batch.
  for (int i = 0; i < batch; ++i) {
    const auto& base_chunks = positives[i].base_chunks;
    for (std::size_t c = 0; c < base_chunks.size(); ++c) {
      ContrastivePair pair;
      pair.anchor = {RepRef::Kind::kChunkMean, i, static_cast<int>(c)};
      pair.positive = {RepRef::Kind::kChunkMean, batch + i, static_cast<int>(c)};
      std::vector<RepRef> pool;
      for (int v = 0; v < 2 * batch; ++v) {
        const auto& chunks = *views[static_cast<std::size_t>(v)].chunks;
        for (std::size_t c2 = 0; c2 < chunks.size(); ++c2) {
          if (chunks[c2].slot_type != base_chunks[c].slot_type) {
            pool.push_back({RepRef::Kind::kChunkMean, v, static_cast<int>(c2)});
          }
        }
      }
      pair.negatives = sample_up_to(std::move(pool), rng, keep);
      out.slot.push_back(std::move(pair));
    }
  }

  // Word level: non-O words attract a same-suffix word and repel
  // different-suffix words; O words take no part.
  auto suffix_at = [&](int v, int t) -> std::string {
    const std::string& tag =
        views[static_cast<std::size_t>(v)].utt->slot_tags[static_cast<std::size_t>(t)];
    return tag == "O" ? std::string() : tag.substr(2);
  };
  for (int i = 0; i < batch; ++i) {
    for (int t = 0; t < bases[i].length(); ++t) {
      const std::string suffix = suffix_at(i, t);
      if (suffix.empty()) continue;
      std::vector<RepRef> same, other;
      for (int v = 0; v < 2 * batch; ++v) {
        for (int t2 = 0; t2 < views[static_cast<std::size_t>(v)].utt->length(); ++t2) {
          if (v == i && t2 == t) continue;
          const std::string s2 = suffix_at(v, t2);
          if (s2.empty()) continue;
          (s2 == suffix ? same : other).push_back({RepRef::Kind::kToken, v, t2});
        }
      }
      if (same.empty()) continue;  // unique suffix in batch: skip the anchor
      ContrastivePair pair;
      pair.anchor = {RepRef::Kind::kToken, i, t};
      pair.positive = same[draw_index(rng, same.size())];
      pair.negatives = sample_up_to(std::move(other), rng, keep);
      out.word.push_back(std::move(pair));
    }
  }

  return out;
}

std::string pair_manifest_json(const ContrastiveBatch& batch) {
  json records = json::array();
  append_level(records, "coarse_utterance", batch.coarse_utt);
  append_level(records, "fine_utterance", batch.fine_utt);
  append_level(records, "slot", batch.slot);
  append_level(records, "word", batch.word);
  std::string out;
  for (const json& rec : records) out += rec.dump() + "\n";
  return out;
}

}  // namespace mmcl
