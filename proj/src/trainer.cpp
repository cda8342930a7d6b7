#include "mmcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mmcl {

namespace {

using nlohmann::json;

constexpr double kProbFloor = 1e-12;

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (const std::string& l : labels) {
    if (!out.empty()) out += '#';
    out += l;
  }
  return out;
}

}  // namespace

Tensor intent_task_loss(const Tensor& probs, std::span<const int> gold_intent_ids) {
  const int vocab = probs.dim(1);
  Tensor hot({1, vocab});
  Tensor cold = Tensor::full({1, vocab}, 1.0);
  for (int id : gold_intent_ids) {
    if (id < 0 || id >= vocab) throw ContractError("intent loss: gold id out of range");
    hot(0, id) = 1.0;
    cold(0, id) = 0.0;
  }
  Tensor on = mul(hot, log(clamp_min(probs, kProbFloor)));
  Tensor off = mul(cold, log(clamp_min(sub(Tensor::scalar(1.0), probs), kProbFloor)));
  return neg(mean_all(add(on, off)));
}

Tensor slot_task_loss(const Tensor& dist, std::span<const int> gold_slot_ids,
                      double label_smoothing) {
  const int n = dist.dim(0);
  const int vocab = dist.dim(1);
  if (static_cast<int>(gold_slot_ids.size()) != n) {
    throw ContractError("slot loss: gold length mismatch");
  }
  const double off_mass = label_smoothing / vocab;
  Tensor target({n, vocab});
  for (int t = 0; t < n; ++t) {
    const int gold = gold_slot_ids[static_cast<std::size_t>(t)];
    if (gold < 0 || gold >= vocab) throw ContractError("slot loss: gold id out of range");
    for (int c = 0; c < vocab; ++c) {
      target(t, c) = c == gold ? 1.0 - label_smoothing + off_mass : off_mass;
    }
  }
  Tensor ce = neg(mul(target, log(clamp_min(dist, kProbFloor))));
  return mean_pool(sum(ce, 1), 0);
}

Tensor total_loss(const LossTerms& terms, const LossToggles& toggles,
                  const LossWeights& weights) {
  if (!terms.l_i.defined() || !terms.l_s.defined()) {
    throw ContractError("total_loss: task terms are required");
  }
  Tensor total = add(terms.l_i, terms.l_s);
  auto maybe_add = [&](bool enabled, const Tensor& term, double weight) {
    if (!enabled || !term.defined()) return;
    total = add(total, weight == 1.0 ? term : scale(term, weight));
  };
  maybe_add(toggles.cucl, terms.cucl, weights.cucl);
  maybe_add(toggles.fucl, terms.fucl, weights.fucl);
  maybe_add(toggles.scl, terms.scl, weights.scl);
  maybe_add(toggles.wcl, terms.wcl, weights.wcl);
  maybe_add(toggles.skl, terms.skl, weights.skl);
  maybe_add(toggles.ikl, terms.ikl, weights.ikl);
  return total;
}

LossValues loss_values(const LossTerms& terms, const Tensor& total) {
  auto value = [](const Tensor& t) { return t.defined() ? t.item() : 0.0; };
  LossValues v;
  v.l_i = value(terms.l_i);
  v.l_s = value(terms.l_s);
  v.cucl = value(terms.cucl);
  v.fucl = value(terms.fucl);
  v.scl = value(terms.scl);
  v.wcl = value(terms.wcl);
  v.skl = value(terms.skl);
  v.ikl = value(terms.ikl);
  v.total = value(total);
  return v;
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ParameterStore& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (!p.trainable || !p.tensor.tracked()) continue;
    const auto& g = p.tensor.grad();
    auto& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(g.size(), 0.0);
      st.v.assign(g.size(), 0.0);
    }
    auto& w = p.tensor.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = st.m[i] / bc1;
      const double v_hat = st.v[i] / bc2;
      w[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

Prediction predict_utterance(const Model& model, const Utterance& u) {
  Model::Output out = model.forward(u);
  Prediction p;
  for (int id : out.slot_ids) p.slot_tags.push_back(model.vocab().slot_tag_at(id));
  for (int id : out.voted_intents) p.intents.push_back(model.vocab().intent_at(id));
  std::sort(p.intents.begin(), p.intents.end());
  return p;
}

ChunkF1 chunk_f1(const std::vector<std::vector<std::string>>& predicted_tags,
                 const std::vector<std::vector<std::string>>& gold_tags) {
  if (predicted_tags.size() != gold_tags.size()) {
    throw ContractError("chunk_f1: corpus size mismatch");
  }
  ChunkF1 out;
  for (std::size_t i = 0; i < predicted_tags.size(); ++i) {
    std::vector<SlotSpan> pred = extract_chunks(predicted_tags[i]);
    std::vector<SlotSpan> gold = extract_chunks(gold_tags[i]);
    out.predicted += static_cast<long>(pred.size());
    out.gold += static_cast<long>(gold.size());
    for (const SlotSpan& p : pred) {
      for (const SlotSpan& g : gold) {
        if (p.slot_type == g.slot_type && p.start == g.start && p.end == g.end) {
          ++out.matched;
          break;
        }
      }
    }
  }
  out.precision = out.predicted ? static_cast<double>(out.matched) / out.predicted
                                : (out.gold == 0 ? 1.0 : 0.0);
  out.recall = out.gold ? static_cast<double>(out.matched) / out.gold
                        : (out.predicted == 0 ? 1.0 : 0.0);
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

EvalReport score_predictions(const std::vector<Prediction>& predictions,
                             const std::vector<Utterance>& data) {
  if (predictions.size() != data.size()) {
    throw ContractError("score: prediction/gold count mismatch");
  }
  EvalReport report;
  report.utterance_count = static_cast<int>(data.size());
  std::vector<std::vector<std::string>> predicted_tags, gold_tags;
  long intent_hits = 0, sentence_hits = 0, overall_hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Utterance& u = data[i];
    const Prediction& pred = predictions[i];
    predicted_tags.push_back(pred.slot_tags);
    gold_tags.push_back(u.slot_tags);

    const bool intents_ok = pred.intents == u.intents;  // both sorted
    const bool slots_ok = pred.slot_tags == u.slot_tags;
    intent_hits += intents_ok;
    sentence_hits += slots_ok;
    overall_hits += intents_ok && slots_ok;
    if (!intents_ok || !slots_ok) {
      report.errors.push_back({static_cast<int>(i), !intents_ok, !slots_ok,
                               join_labels(u.intents), join_labels(pred.intents)});
    }
  }
  ChunkF1 f1 = chunk_f1(predicted_tags, gold_tags);
  report.slot_f1 = f1.f1;
  report.slot_precision = f1.precision;
  report.slot_recall = f1.recall;
  if (!data.empty()) {
    report.intent_acc = static_cast<double>(intent_hits) / data.size();
    report.slot_sentence_acc = static_cast<double>(sentence_hits) / data.size();
    report.overall_acc = static_cast<double>(overall_hits) / data.size();
  }
  return report;
}

EvalReport evaluate(const Model& model, const std::vector<Utterance>& data) {
  std::vector<Prediction> predictions;
  predictions.reserve(data.size());
  for (const Utterance& u : data) predictions.push_back(predict_utterance(model, u));
  return score_predictions(predictions, data);
}

std::string EvalReport::to_json() const {
  json j = {{"slot_f1", slot_f1},
            {"slot_precision", slot_precision},
            {"slot_recall", slot_recall},
            {"intent_acc", intent_acc},
            {"overall_acc", overall_acc},
            {"slot_sentence_acc", slot_sentence_acc},
            {"utterance_count", utterance_count},
            {"errors", json::array()}};
  for (const EvalErrorRecord& e : errors) {
    j["errors"].push_back({{"index", e.index},
                           {"intent_wrong", e.intent_wrong},
                           {"slots_wrong", e.slots_wrong},
                           {"gold_intents", e.gold_intents},
                           {"predicted_intents", e.predicted_intents}});
  }
  return j.dump(2);
}

Trainer::Trainer(Model& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      toggles_(LossToggles::from_config(config)),
      weights_(LossWeights::from_config(config)),
      adam_(config.learning_rate),
      shuffle_rng_(config.seed ^ 0x9e3779b97f4a7c15ull),
      augment_rng_(config.seed ^ 0xbf58476d1ce4e5b9ull),
      dropout_rng_(config.seed ^ 0x94d049bb133111ebull) {
  config_.validate();
}

void Trainer::prepare(const std::vector<Utterance>& train_set) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  train_set_ = &train_set;
  dict_ = build_slot_dictionary(train_set, config_.dedup_dictionary);
  snapshot_ = initial_snapshot(train_set, model_.vocab());
  epoch_ = 0;
}

LossTerms Trainer::batch_terms(std::span<const int> example_ids, bool training) {
  if (!train_set_) throw ContractError("batch_terms: call prepare() first");
  const auto& train = *train_set_;
  const int batch = static_cast<int>(example_ids.size());
  if (batch < 1) throw ContractError("batch_terms: empty batch");

  std::vector<Utterance> bases;
  bases.reserve(static_cast<std::size_t>(batch));
  for (int id : example_ids) bases.push_back(train.at(static_cast<std::size_t>(id)));

  std::vector<Model::Output> outputs;
  outputs.reserve(bases.size());
  for (const Utterance& u : bases) {
    outputs.push_back(model_.forward(u, training, &dropout_rng_));
  }

  LossTerms terms;
  {
    Tensor li_sum, ls_sum;
    for (std::size_t b = 0; b < bases.size(); ++b) {
      std::vector<int> gold_intents, gold_slots;
      for (const std::string& label : bases[b].intents) {
        auto id = model_.vocab().find_intent(label);
        if (!id) throw ContractError("train: intent missing from vocabulary");
        gold_intents.push_back(*id);
      }
      for (const std::string& tag : bases[b].slot_tags) {
        auto id = model_.vocab().find_slot_tag(tag);
        if (!id) throw ContractError("train: slot tag missing from vocabulary");
        gold_slots.push_back(*id);
      }
      Tensor li = intent_task_loss(outputs[b].intent_probs, gold_intents);
      Tensor ls = slot_task_loss(outputs[b].slot_dist, gold_slots,
                                 config_.label_smoothing);
      li_sum = li_sum.defined() ? add(li_sum, li) : li;
      ls_sum = ls_sum.defined() ? add(ls_sum, ls) : ls;
    }
    terms.l_i = scale(li_sum, 1.0 / batch);
    terms.l_s = scale(ls_sum, 1.0 / batch);
  }

  const bool any_cl =
      toggles_.cucl || toggles_.fucl || toggles_.scl || toggles_.wcl;
  if (any_cl && batch >= 2) {
    std::vector<PositiveUtterance> positives;
    positives.reserve(bases.size());
    for (const Utterance& u : bases) {
      positives.push_back(generate_positive(u, dict_, augment_rng_));
    }
    ContrastiveBatch pairs = build_batch_pairs(bases, positives, augment_rng_,
                                               config_.negatives_per_anchor);
    if (!toggles_.cucl) pairs.coarse_utt.clear();
    if (!toggles_.fucl) pairs.fine_utt.clear();
    if (!toggles_.scl) pairs.slot.clear();
    if (!toggles_.wcl) pairs.word.clear();

    std::vector<EncodedUtterance> encoded;
    for (std::size_t b = 0; b < bases.size(); ++b) {
      encoded.push_back({&bases[b], outputs[b].E, positives[b].base_chunks});
    }
    for (const PositiveUtterance& p : positives) {
      encoded.push_back({&p.utterance,
                         model_.encode(p.utterance, training, &dropout_rng_),
                         p.positive_chunks});
    }
    RepresentationSet reps = build_representation_set(encoded);
    SimilarityConfig sim_cfg{config_.knn_k, config_.tau};
    LevelLosses cl = level_losses(reps, pairs, sim_cfg);
    terms.scl = cl.scl;
    terms.wcl = cl.wcl;
    terms.cucl = cl.cucl;
    terms.fucl = cl.fucl;
  }

  if (toggles_.skl || toggles_.ikl) {
    std::vector<Tensor> slot_dists, intent_probs;
    for (const Model::Output& out : outputs) {
      slot_dists.push_back(out.slot_dist);
      intent_probs.push_back(out.intent_probs);
    }
    if (toggles_.skl) terms.skl = l_skl(snapshot_, example_ids, slot_dists);
    if (toggles_.ikl) terms.ikl = l_ikl(snapshot_, example_ids, intent_probs);
  }
  return terms;
}

LossValues Trainer::run_epoch() {
  if (!train_set_) throw ContractError("run_epoch: call prepare() first");
  const auto& train = *train_set_;
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);

  LossValues sums;
  int batches = 0;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(config_.batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
    std::span<const int> ids(order.data() + start, end - start);

    Tape tape;
    TapeScope scope(tape);
    model_.params().watch_all(tape);
    model_.params().zero_grads();
    LossTerms terms = batch_terms(ids, true);
    Tensor total = total_loss(terms, toggles_, weights_);
    LossValues v = loss_values(terms, total);
    if (!std::isfinite(v.total)) {
      std::ostringstream os;
      os << "non-finite loss at epoch " << epoch_ + 1 << " batch " << batches
         << ": l_i=" << v.l_i << " l_s=" << v.l_s << " cucl=" << v.cucl
         << " fucl=" << v.fucl << " scl=" << v.scl << " wcl=" << v.wcl
         << " skl=" << v.skl << " ikl=" << v.ikl;
      throw NumericError(os.str());
    }
    backward(total);
    adam_.step(model_.params());

    sums.l_i += v.l_i;
    sums.l_s += v.l_s;
    sums.cucl += v.cucl;
    sums.fucl += v.fucl;
    sums.scl += v.scl;
    sums.wcl += v.wcl;
    sums.skl += v.skl;
    sums.ikl += v.ikl;
    sums.total += v.total;
    ++batches;
  }
  ++epoch_;
  update_snapshot();

  const double inv = batches > 0 ? 1.0 / batches : 0.0;
  sums.l_i *= inv;
  sums.l_s *= inv;
  sums.cucl *= inv;
  sums.fucl *= inv;
  sums.scl *= inv;
  sums.wcl *= inv;
  sums.skl *= inv;
  sums.ikl *= inv;
  sums.total *= inv;
  return sums;
}

void Trainer::update_snapshot() {
  const auto& train = *train_set_;
  std::vector<std::vector<double>> slot_rows, intent_rows;
  slot_rows.reserve(train.size());
  intent_rows.reserve(train.size());
  for (const Utterance& u : train) {
    Model::Output out = model_.forward(u);  // evaluation mode
    slot_rows.push_back(out.slot_dist.values());
    intent_rows.push_back(out.intent_probs.values());
  }
  snapshot_ = make_snapshot(std::move(slot_rows), std::move(intent_rows),
                            model_.vocab().slot_tag_count(),
                            model_.vocab().intent_count(), epoch_);
}

double Trainer::dev_task_loss(const std::vector<Utterance>& dev_set) {
  if (dev_set.empty()) return 0.0;
  double total = 0.0;
  for (const Utterance& u : dev_set) {
    Model::Output out = model_.forward(u);
    std::vector<int> gold_intents, gold_slots;
    for (const std::string& label : u.intents) {
      if (auto id = model_.vocab().find_intent(label)) gold_intents.push_back(*id);
    }
    bool scorable = true;
    for (const std::string& tag : u.slot_tags) {
      auto id = model_.vocab().find_slot_tag(tag);
      if (!id) {
        scorable = false;  // unseen dev label: skip the slot term
        break;
      }
      gold_slots.push_back(*id);
    }
    double value = intent_task_loss(out.intent_probs, gold_intents).item();
    if (scorable) {
      value += slot_task_loss(out.slot_dist, gold_slots, config_.label_smoothing)
                   .item();
    }
    total += value;
  }
  return total / static_cast<double>(dev_set.size());
}

TrainResult Trainer::train(const std::vector<Utterance>& train_set,
                           const std::vector<Utterance>& dev_set,
                           const std::filesystem::path& out_dir) {
  prepare(train_set);
  std::filesystem::create_directories(out_dir);
  std::ofstream log_file(out_dir / "train_log.jsonl");

  TrainResult result;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  int stall = 0;
  int fallbacks_seen = model_.vote_fallback_count();
  for (int e = 1; e <= config_.max_epochs; ++e) {
    LossValues tv = run_epoch();
    const double dev_loss = dev_task_loss(dev_set);
    EvalReport dev_report = evaluate(model_, dev_set);
    const int fallbacks = model_.vote_fallback_count() - fallbacks_seen;
    fallbacks_seen = model_.vote_fallback_count();

    json line = {{"epoch", e},
                 {"train",
                  {{"l_i", tv.l_i},
                   {"l_s", tv.l_s},
                   {"l_cucl", tv.cucl},
                   {"l_fucl", tv.fucl},
                   {"l_scl", tv.scl},
                   {"l_wcl", tv.wcl},
                   {"l_skl", tv.skl},
                   {"l_ikl", tv.ikl},
                   {"total", tv.total}}},
                 {"dev_loss", dev_loss},
                 {"vote_fallbacks", fallbacks},
                 {"dev",
                  {{"overall_acc", dev_report.overall_acc},
                   {"intent_acc", dev_report.intent_acc},
                   {"slot_f1", dev_report.slot_f1}}}};
    result.log_lines.push_back(line.dump());
    if (log_file) log_file << result.log_lines.back() << "\n" << std::flush;

    result.epochs_run = e;
    if (dev_report.overall_acc > result.best_dev_overall) {
      result.best_dev_overall = dev_report.overall_acc;
      result.best_epoch = e;
      model_.save(out_dir / "checkpoint.bin");
      save_snapshot(out_dir / "snapshot.bin", snapshot_);
    }
    if (dev_loss < best_dev_loss) {
      best_dev_loss = dev_loss;
      stall = 0;
    } else {
      ++stall;
    }
    if (stall >= config_.patience) break;
  }
  result.best_dev_loss = best_dev_loss;
  return result;
}

}  // namespace mmcl
