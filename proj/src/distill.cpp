#include "mmcl/distill.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "mmcl/params.hpp"

namespace mmcl {

namespace {

constexpr double kFloor = 1e-12;

void check_distribution(std::span<const double> p, bool simplex) {
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0) throw DomainError("kl: negative probability entry");
    total += v;
  }
  if (simplex && std::abs(total - 1.0) > 1e-6) {
    throw DomainError("kl: distribution does not sum to 1");
  }
}

}  // namespace

void PredictionSnapshot::validate() const {
  if (slot_rows.size() != intent_rows.size()) {
    throw ContractError("snapshot: slot/intent example counts differ");
  }
  for (std::size_t i = 0; i < slot_rows.size(); ++i) {
    const auto& s = slot_rows[i];
    const int n = static_cast<int>(s.size()) / slot_vocab;
    for (int t = 0; t < n; ++t) {
      double total = 0.0;
      for (int c = 0; c < slot_vocab; ++c) {
        total += s[static_cast<std::size_t>(t * slot_vocab + c)];
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw ContractError("snapshot: slot row off the simplex");
      }
    }
    for (double v : intent_rows[i]) {
      if (v < 0.0 || v > 1.0) throw ContractError("snapshot: intent entry outside [0,1]");
    }
  }
}

PredictionSnapshot initial_snapshot(const std::vector<Utterance>& train,
                                    const Vocabulary& vocab) {
  PredictionSnapshot snap;
  snap.epoch = 0;
  snap.slot_vocab = vocab.slot_tag_count();
  snap.intent_vocab = vocab.intent_count();
  for (const Utterance& u : train) {
    const int n = u.length();
    std::vector<double> slots(static_cast<std::size_t>(n) * snap.slot_vocab, 0.0);
    for (int t = 0; t < n; ++t) {
      auto id = vocab.find_slot_tag(u.slot_tags[static_cast<std::size_t>(t)]);
      if (!id) throw ContractError("snapshot: slot tag absent from vocabulary");
      slots[static_cast<std::size_t>(t * snap.slot_vocab + *id)] = 1.0;
    }
    std::vector<double> intents(static_cast<std::size_t>(n) * snap.intent_vocab, 0.0);
    for (const std::string& label : u.intents) {
      auto id = vocab.find_intent(label);
      if (!id) throw ContractError("snapshot: intent absent from vocabulary");
      for (int t = 0; t < n; ++t) {
        intents[static_cast<std::size_t>(t * snap.intent_vocab + *id)] = 1.0;
      }
    }
    snap.slot_rows.push_back(std::move(slots));
    snap.intent_rows.push_back(std::move(intents));
  }
  return snap;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl: length mismatch");
  check_distribution(p, true);
  check_distribution(q, false);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    total += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kFloor)));
  }
  return total;
}

Tensor kl_divergence(std::span<const double> p, const Tensor& q) {
  if (p.size() != q.numel()) throw DimensionError("kl: length mismatch");
  check_distribution(p, true);
  check_distribution(q.values(), false);
  // p (ln p - ln q): p and ln p are constants; the p=0 entries contribute 0
  // because the constant factor is exactly zero.
  Tensor p_const(q.shape()), ln_p(q.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p_const.values()[i] = p[i];
    ln_p.values()[i] = p[i] > 0.0 ? std::log(p[i]) : 0.0;
  }
  return sum_all(mul(p_const, sub(ln_p, log(clamp_min(q, kFloor)))));
}

double bernoulli_kl_sum(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || p[i] > 1.0 || q[i] < 0.0 || q[i] > 1.0) {
      throw DomainError("bernoulli kl: entry outside [0,1]");
    }
    if (p[i] > 0.0) {
      total += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kFloor)));
    }
    if (p[i] < 1.0) {
      total += (1.0 - p[i]) *
               (std::log(1.0 - p[i]) - std::log(std::max(1.0 - q[i], kFloor)));
    }
  }
  return total;
}

Tensor bernoulli_kl_sum(std::span<const double> p, const Tensor& q) {
  if (p.size() != q.numel()) throw DimensionError("kl: length mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || p[i] > 1.0) throw DomainError("bernoulli kl: p outside [0,1]");
  }
  Tensor p_const(q.shape()), ln_p(q.shape()), one_minus_p(q.shape()),
      ln_one_minus_p(q.shape());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p_const.values()[i] = p[i];
    ln_p.values()[i] = p[i] > 0.0 ? std::log(p[i]) : 0.0;
    one_minus_p.values()[i] = 1.0 - p[i];
    ln_one_minus_p.values()[i] = p[i] < 1.0 ? std::log(1.0 - p[i]) : 0.0;
  }
  Tensor on_term = mul(p_const, sub(ln_p, log(clamp_min(q, kFloor))));
  Tensor off_term = mul(one_minus_p,
                        sub(ln_one_minus_p,
                            log(clamp_min(sub(Tensor::scalar(1.0), q), kFloor))));
  return sum_all(add(on_term, off_term));
}

namespace {

template <typename KlFn>
Tensor mean_over_examples(const PredictionSnapshot& snapshot,
                          std::span<const int> example_ids,
                          std::span<const Tensor> current, int vocab,
                          const std::vector<std::vector<double>>& rows, KlFn kl) {
  if (example_ids.size() != current.size()) {
    throw ContractError("distill: example ids and predictions differ in count");
  }
  if (example_ids.empty()) return Tensor::scalar(0.0);
  Tensor total;
  for (std::size_t b = 0; b < example_ids.size(); ++b) {
    const int id = example_ids[b];
    if (id < 0 || static_cast<std::size_t>(id) >= snapshot.size()) {
      throw ContractError("distill: example " + std::to_string(id) +
                          " missing from snapshot");
    }
    const Tensor& cur = current[b];
    const int n = cur.dim(0);
    if (cur.dim(1) != vocab || snapshot.tokens_of(id) != n) {
      throw ContractError("distill: prediction shape does not match snapshot");
    }
    const auto& prev = rows[static_cast<std::size_t>(id)];
    Tensor example_sum;
    for (int t = 0; t < n; ++t) {
      std::span<const double> p(prev.data() + static_cast<std::size_t>(t) * vocab,
                                static_cast<std::size_t>(vocab));
      Tensor row = slice(cur, 0, t, t + 1);
      Tensor term = kl(p, row);
      example_sum = example_sum.defined() ? add(example_sum, term) : term;
    }
    Tensor mean = scale(example_sum, 1.0 / n);
    total = total.defined() ? add(total, mean) : mean;
  }
  return scale(total, 1.0 / static_cast<double>(example_ids.size()));
}

}  // namespace

Tensor l_skl(const PredictionSnapshot& snapshot, std::span<const int> example_ids,
             std::span<const Tensor> current_slot_dists) {
  return mean_over_examples(
      snapshot, example_ids, current_slot_dists, snapshot.slot_vocab,
      snapshot.slot_rows, [](std::span<const double> p, const Tensor& q) {
        return kl_divergence(p, q);
      });
}

Tensor l_ikl(const PredictionSnapshot& snapshot, std::span<const int> example_ids,
             std::span<const Tensor> current_intent_probs) {
  return mean_over_examples(
      snapshot, example_ids, current_intent_probs, snapshot.intent_vocab,
      snapshot.intent_rows, [](std::span<const double> p, const Tensor& q) {
        return bernoulli_kl_sum(p, q);
      });
}

PredictionSnapshot make_snapshot(std::vector<std::vector<double>> slot_rows,
                                 std::vector<std::vector<double>> intent_rows,
                                 int slot_vocab, int intent_vocab, int epoch) {
  PredictionSnapshot snap;
  snap.epoch = epoch;
  snap.slot_vocab = slot_vocab;
  snap.intent_vocab = intent_vocab;
  snap.slot_rows = std::move(slot_rows);
  snap.intent_rows = std::move(intent_rows);
  return snap;
}

namespace {

std::string padded(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08zu", i);
  return buf;
}

}  // namespace

void save_snapshot(const std::filesystem::path& path,
                   const PredictionSnapshot& snapshot) {
  std::map<std::string, Tensor> named;
  named.emplace("snapshot/epoch", Tensor::scalar(snapshot.epoch));
  named.emplace("snapshot/slot_vocab", Tensor::scalar(snapshot.slot_vocab));
  named.emplace("snapshot/intent_vocab", Tensor::scalar(snapshot.intent_vocab));
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    const int n = snapshot.tokens_of(static_cast<int>(i));
    named.emplace("snapshot/slot/" + padded(i),
                  Tensor({n, snapshot.slot_vocab}, snapshot.slot_rows[i]));
    named.emplace("snapshot/intent/" + padded(i),
                  Tensor({n, snapshot.intent_vocab}, snapshot.intent_rows[i]));
  }
  save_named_tensors(path, named);
}

PredictionSnapshot load_snapshot(const std::filesystem::path& path) {
  std::map<std::string, Tensor> named = load_named_tensors(path);
  PredictionSnapshot snap;
  snap.epoch = static_cast<int>(named.at("snapshot/epoch").item());
  snap.slot_vocab = static_cast<int>(named.at("snapshot/slot_vocab").item());
  snap.intent_vocab = static_cast<int>(named.at("snapshot/intent_vocab").item());
  for (std::size_t i = 0;; ++i) {
    auto slot_it = named.find("snapshot/slot/" + padded(i));
    if (slot_it == named.end()) break;
    snap.slot_rows.push_back(slot_it->second.values());
    snap.intent_rows.push_back(named.at("snapshot/intent/" + padded(i)).values());
  }
  return snap;
}

}  // namespace mmcl
