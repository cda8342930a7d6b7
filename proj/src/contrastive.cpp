#include "mmcl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

namespace mmcl {

namespace {

double raw_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

// Shared scoring core for margin similarity. Entries are unit-normalized once
// so each pairwise cosine is a single dot product; raw cosine rows are cached
// for the kNN selection, which happens on values and only then materializes
// tape ops for the selected neighbors.
class SimPool {
public:
  int add(const Tensor& rep, bool in_pool) {
    const double norm = raw_norm(rep);
    if (norm <= 0.0) {
      throw DomainError("margin similarity: zero-norm representation");
    }
    entries_.push_back(Entry{rep, Tensor(), in_pool, norm, {}});
    return static_cast<int>(entries_.size()) - 1;
  }

  double cos_value(int i, int j) {
    Entry& e = entries_[static_cast<std::size_t>(i)];
    if (e.cos_row.empty()) {
      e.cos_row.resize(entries_.size());
      const auto& xi = e.rep.values();
      const double ni = e.norm;
      for (std::size_t z = 0; z < entries_.size(); ++z) {
        const auto& xz = entries_[z].rep.values();
        double d = 0.0;
        for (std::size_t c = 0; c < xi.size(); ++c) d += xi[c] * xz[c];
        e.cos_row[z] = d / (ni * entries_[z].norm);
      }
    }
    return e.cos_row[static_cast<std::size_t>(j)];
  }

  Tensor cosine_t(int i, int j) { return dot(unit(i), unit(j)); }

  /// Margin similarity between entries i and j with the in-pool entries,
  /// minus {i, j}, as the neighbor pool.
  Tensor sim(int i, int j, const SimilarityConfig& cfg) {
    Tensor result = cosine_t(i, j);
    int pool_size = 0;
    for (std::size_t z = 0; z < entries_.size(); ++z) {
      const int zi = static_cast<int>(z);
      if (entries_[z].in_pool && zi != i && zi != j) ++pool_size;
    }
    int k = cfg.k;
    if (k > pool_size) {
      std::cerr << "margin similarity: clamping k=" << k << " to pool size "
                << pool_size << "\n";
      k = pool_size;
    }
    if (k == 0) return result;

    Tensor correction;
    for (int self : {i, j}) {
      const int other = self == i ? j : i;
      for (int z : nearest(self, other, k)) {
        Tensor term = cosine_t(self, z);
        correction = correction.defined() ? mmcl::add(correction, term) : term;
      }
    }
    return sub(result, scale(correction, 1.0 / (2.0 * k)));
  }

private:
  struct Entry {
    Tensor rep;
    Tensor unit_cache;
    bool in_pool = false;
    double norm = 0.0;
    std::vector<double> cos_row;
  };

  const Tensor& unit(int i) {
    Entry& e = entries_[static_cast<std::size_t>(i)];
    if (!e.unit_cache.defined()) {
      e.unit_cache = mul(e.rep, reciprocal_pos(sqrt_pos(dot(e.rep, e.rep))));
    }
    return e.unit_cache;
  }

  std::vector<int> nearest(int self, int excluded, int k) {
    std::vector<int> candidates;
    for (std::size_t z = 0; z < entries_.size(); ++z) {
      const int zi = static_cast<int>(z);
      if (entries_[z].in_pool && zi != self && zi != excluded) {
        candidates.push_back(zi);
      }
    }
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [&](int a, int b) {
                        const double ca = cos_value(self, a);
                        const double cb = cos_value(self, b);
                        if (ca != cb) return ca > cb;
                        return a < b;  // deterministic tie order
                      });
    candidates.resize(static_cast<std::size_t>(k));
    return candidates;
  }

  std::vector<Entry> entries_;
};

}  // namespace

const Tensor& RepresentationSet::resolve(const RepRef& ref) const {
  const auto u = static_cast<std::size_t>(ref.utt);
  switch (ref.kind) {
    case RepRef::Kind::kUtterance:
      return utterance_reps.at(u);
    case RepRef::Kind::kToken:
      return token_reps.at(u).at(static_cast<std::size_t>(ref.index));
    case RepRef::Kind::kChunkMean:
      return chunk_reps.at(u).at(static_cast<std::size_t>(ref.index));
  }
  throw ContractError("representation ref: unknown kind");
}

RepresentationSet build_representation_set(std::span<const EncodedUtterance> batch) {
  RepresentationSet reps;
  for (const EncodedUtterance& eu : batch) {
    const Tensor& E = eu.encoding;
    const int n = E.dim(0);
    reps.utterance_reps.push_back(mean_pool(E, 0));
    std::vector<Tensor> tokens;
    std::vector<bool> non_o;
    for (int t = 0; t < n; ++t) {
      tokens.push_back(mean_pool(slice(E, 0, t, t + 1), 0));
      non_o.push_back(eu.utterance->slot_tags[static_cast<std::size_t>(t)] != "O");
    }
    reps.token_reps.push_back(std::move(tokens));
    reps.token_non_o.push_back(std::move(non_o));
    std::vector<Tensor> chunks;
    for (const SlotSpan& s : eu.chunks) {
      chunks.push_back(mean_pool(slice(E, 0, s.start, s.end + 1), 0));
    }
    reps.chunk_reps.push_back(std::move(chunks));
  }
  return reps;
}

Tensor cosine(const Tensor& x, const Tensor& y) {
  if (raw_norm(x) <= 0.0 || raw_norm(y) <= 0.0) {
    throw DomainError("cosine: zero vector");
  }
  Tensor num = dot(x, y);
  Tensor den = sqrt_pos(mul(dot(x, x), dot(y, y)));
  return mul(num, reciprocal_pos(den));
}

Tensor margin_similarity(const Tensor& x, const Tensor& y,
                         std::span<const Tensor> pool, const SimilarityConfig& cfg) {
  cfg.validate();
  SimPool sim_pool;
  const int xi = sim_pool.add(x, false);
  const int yi = sim_pool.add(y, false);
  for (const Tensor& z : pool) sim_pool.add(z, true);
  return sim_pool.sim(xi, yi, cfg);
}

Tensor info_nce_from_scores(const Tensor& positive_score,
                            std::span<const Tensor> negative_scores, double tau) {
  if (tau <= 0.0) throw ContractError("info_nce: tau must be positive");
  Tensor pos = scale(positive_score, 1.0 / tau);
  if (negative_scores.empty()) return Tensor::scalar(0.0);

  std::vector<Tensor> scaled = {pos};
  for (const Tensor& s : negative_scores) scaled.push_back(scale(s, 1.0 / tau));

  // log-sum-exp with a detached shift.
  double shift = -std::numeric_limits<double>::infinity();
  for (const Tensor& s : scaled) shift = std::max(shift, s.item());
  Tensor total;
  for (const Tensor& s : scaled) {
    Tensor e = exp(sub(s, Tensor::scalar(shift)));
    total = total.defined() ? add(total, e) : e;
  }
  Tensor lse = add(log(total), Tensor::scalar(shift));
  return sub(lse, pos);
}

Tensor info_nce(const Tensor& anchor, const Tensor& positive,
                std::span<const Tensor> negatives, const SimilarityConfig& cfg,
                const SimFn& sim) {
  Tensor pos_score = sim(anchor, positive);
  std::vector<Tensor> neg_scores;
  neg_scores.reserve(negatives.size());
  for (const Tensor& n : negatives) neg_scores.push_back(sim(anchor, n));
  return info_nce_from_scores(pos_score, neg_scores, cfg.tau);
}

namespace {

// One level's loss: mean of info_nce over the level's pairs, scoring with
// margin similarity whose neighbor pool is the level universe minus the
// compared pair.
Tensor one_level(const RepresentationSet& reps,
                 const std::vector<ContrastivePair>& pairs,
                 std::span<const RepRef> universe, const SimilarityConfig& cfg) {
  if (pairs.empty()) return Tensor::scalar(0.0);

  SimPool pool;
  std::vector<std::pair<RepRef, int>> index;
  auto entry_of = [&](const RepRef& ref, bool in_pool) {
    for (const auto& [r, id] : index) {
      if (r == ref) return id;
    }
    const int id = pool.add(reps.resolve(ref), in_pool);
    index.emplace_back(ref, id);
    return id;
  };
  for (const RepRef& ref : universe) entry_of(ref, true);
  // Register every ref up front: cosine row caches are sized to the entry
  // count at first use, so no entry may be added after scoring starts.
  for (const ContrastivePair& p : pairs) {
    entry_of(p.anchor, false);
    entry_of(p.positive, false);
    for (const RepRef& n : p.negatives) entry_of(n, false);
  }

  Tensor total;
  for (const ContrastivePair& p : pairs) {
    const int a = entry_of(p.anchor, false);
    Tensor pos_score = pool.sim(a, entry_of(p.positive, false), cfg);
    std::vector<Tensor> neg_scores;
    for (const RepRef& n : p.negatives) {
      neg_scores.push_back(pool.sim(a, entry_of(n, false), cfg));
    }
    Tensor loss = info_nce_from_scores(pos_score, neg_scores, cfg.tau);
    total = total.defined() ? add(total, loss) : loss;
  }
  return scale(total, 1.0 / static_cast<double>(pairs.size()));
}

}  // namespace

LevelLosses level_losses(const RepresentationSet& reps, const ContrastiveBatch& pairs,
                         const SimilarityConfig& cfg) {
  cfg.validate();
  const int n_utts = static_cast<int>(reps.utterance_reps.size());

  std::vector<RepRef> utterances, tokens, chunks, words;
  for (int u = 0; u < n_utts; ++u) {
    utterances.push_back({RepRef::Kind::kUtterance, u, 0});
    for (int t = 0; t < static_cast<int>(reps.token_reps[static_cast<std::size_t>(u)].size()); ++t) {
      tokens.push_back({RepRef::Kind::kToken, u, t});
      if (reps.token_non_o[static_cast<std::size_t>(u)][static_cast<std::size_t>(t)]) {
        words.push_back({RepRef::Kind::kToken, u, t});
      }
    }
    for (int c = 0; c < static_cast<int>(reps.chunk_reps[static_cast<std::size_t>(u)].size()); ++c) {
      chunks.push_back({RepRef::Kind::kChunkMean, u, c});
    }
  }

  LevelLosses out;
  out.scl = one_level(reps, pairs.slot, chunks, cfg);
  out.wcl = one_level(reps, pairs.word, words, cfg);
  out.cucl = one_level(reps, pairs.coarse_utt, utterances, cfg);
  out.fucl = one_level(reps, pairs.fine_utt, tokens, cfg);
  return out;
}

}  // namespace mmcl
