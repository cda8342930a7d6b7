#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmcl/augment.hpp"
#include "mmcl/config.hpp"
#include "mmcl/contrastive.hpp"
#include "mmcl/distill.hpp"
#include "mmcl/model.hpp"

namespace mmcl {

/// Mean over tokens and intent dimensions of binary cross-entropy against the
/// multi-hot gold intent vector broadcast to every token.
Tensor intent_task_loss(const Tensor& probs, std::span<const int> gold_intent_ids);

/// Mean over tokens of cross-entropy against the label-smoothed gold slot
/// distribution.
Tensor slot_task_loss(const Tensor& dist, std::span<const int> gold_slot_ids,
                      double label_smoothing);

struct LossTerms {
  Tensor l_i, l_s, cucl, fucl, scl, wcl, skl, ikl;
};

struct LossToggles {
  bool cucl = true, fucl = true, scl = true, wcl = true, skl = true, ikl = true;
  static LossToggles from_config(const TrainConfig& c) {
    return {c.enable_cucl, c.enable_fucl, c.enable_scl,
            c.enable_wcl, c.enable_skl, c.enable_ikl};
  }
};

struct LossWeights {
  double cucl = 1.0, fucl = 1.0, scl = 1.0, wcl = 1.0, skl = 1.0, ikl = 1.0;
  static LossWeights from_config(const TrainConfig& c) {
    return {c.weight_cucl, c.weight_fucl, c.weight_scl,
            c.weight_wcl, c.weight_skl, c.weight_ikl};
  }
};

/// L = L_I + L_S + enabled auxiliary terms, summed in that fixed order.
/// Disabled or undefined terms contribute exactly nothing.
Tensor total_loss(const LossTerms& terms, const LossToggles& toggles,
                  const LossWeights& weights = {});

struct LossValues {
  double l_i = 0, l_s = 0, cucl = 0, fucl = 0, scl = 0, wcl = 0, skl = 0,
         ikl = 0, total = 0;
};
LossValues loss_values(const LossTerms& terms, const Tensor& total);

/// Adaptive moment estimation with bias correction; deterministic given the
/// parameter name order.
class AdamOptimizer {
public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(ParameterStore& params);

private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> state_;
  long t_ = 0;
  double lr_, beta1_, beta2_, eps_;
};

struct Prediction {
  std::vector<std::string> slot_tags;
  std::vector<std::string> intents;  // sorted label strings
};
Prediction predict_utterance(const Model& model, const Utterance& u);

struct ChunkF1 {
  double precision = 0, recall = 0, f1 = 0;
  long matched = 0, predicted = 0, gold = 0;
};
/// Micro precision/recall/F1 over exact (type, start, end) span matches.
ChunkF1 chunk_f1(const std::vector<std::vector<std::string>>& predicted_tags,
                 const std::vector<std::vector<std::string>>& gold_tags);

struct EvalErrorRecord {
  int index = 0;
  bool intent_wrong = false;
  bool slots_wrong = false;
  std::string gold_intents, predicted_intents;
};

struct EvalReport {
  double slot_f1 = 0, slot_precision = 0, slot_recall = 0;
  double intent_acc = 0, overall_acc = 0, slot_sentence_acc = 0;
  int utterance_count = 0;
  std::vector<EvalErrorRecord> errors;
  std::string to_json() const;
};

/// Scores already-made predictions against gold; evaluate() is this applied
/// to the model's outputs.
EvalReport score_predictions(const std::vector<Prediction>& predictions,
                             const std::vector<Utterance>& data);

EvalReport evaluate(const Model& model, const std::vector<Utterance>& data);

struct TrainResult {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_dev_overall = -1.0;
  double best_dev_loss = 0.0;
  std::vector<std::string> log_lines;  // one JSON object per epoch
};

/// Optimization loop: shuffle, augment, forward, composite loss, backward, Adam
/// step, snapshot swap at epoch end; dev loss drives early stopping while dev
/// overall accuracy selects the saved checkpoint.
class Trainer {
public:
  Trainer(Model& model, const TrainConfig& config);

  void prepare(const std::vector<Utterance>& train_set);
  LossTerms batch_terms(std::span<const int> example_ids, bool training);
  LossValues run_epoch();
  double dev_task_loss(const std::vector<Utterance>& dev_set);

  TrainResult train(const std::vector<Utterance>& train_set,
                    const std::vector<Utterance>& dev_set,
                    const std::filesystem::path& out_dir);

  const PredictionSnapshot& snapshot() const { return snapshot_; }
  const SlotDictionary& dictionary() const { return dict_; }
  int epochs_completed() const { return epoch_; }

private:
  void update_snapshot();

  Model& model_;
  TrainConfig config_;
  LossToggles toggles_;
  LossWeights weights_;
  const std::vector<Utterance>* train_set_ = nullptr;
  SlotDictionary dict_;
  PredictionSnapshot snapshot_;
  AdamOptimizer adam_;
  std::mt19937_64 shuffle_rng_, augment_rng_, dropout_rng_;
  int epoch_ = 0;
};

}  // namespace mmcl
