#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mmcl/distill.hpp"
#include "mmcl/params.hpp"

using namespace mmcl;

namespace {

Tensor random_simplex_rows(int n, int vocab, std::mt19937_64& rng) {
  Tensor t({n, vocab});
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  for (int r = 0; r < n; ++r) {
    double total = 0;
    for (int c = 0; c < vocab; ++c) {
      t(r, c) = dist(rng);
      total += t(r, c);
    }
    for (int c = 0; c < vocab; ++c) t(r, c) /= total;
  }
  return t;
}

std::vector<Utterance> tiny_train() {
  return {
      Utterance{{"go", "boston"}, {"O", "B-city"}, {"BOOK"}},
      Utterance{{"delta", "now"}, {"B-airline", "O"}, {"BOOK", "LIST"}},
  };
}

}  // namespace

TEST_SUITE("distill") {

TEST_CASE("kl of a distribution with itself is zero") {
  std::vector<double> p = {0.2, 0.5, 0.3};
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kl matches direct evaluation of the sum") {
  std::vector<double> p = {0.5, 0.5};
  std::vector<double> q = {0.9, 0.1};
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(kl_divergence(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(25.0 / 9.0)).epsilon(1e-9));
  CHECK(kl_divergence(p, q) == doctest::Approx(0.51083).epsilon(1e-4));
}

TEST_CASE("one-hot p leaves a single surviving term") {
  std::vector<double> p = {0.0, 1.0, 0.0};
  std::vector<double> q = {0.2, 0.3, 0.5};
  CHECK(kl_divergence(p, q) == doctest::Approx(-std::log(0.3)).epsilon(1e-12));
}

TEST_CASE("negative entries are a domain error") {
  std::vector<double> p = {1.1, -0.1};
  std::vector<double> q = {0.5, 0.5};
  CHECK_THROWS_AS(kl_divergence(p, q), DomainError);
}

TEST_CASE("tensor kl agrees with the raw version and only grads q") {
  std::mt19937_64 rng(3);
  Tensor q = random_simplex_rows(1, 4, rng);
  std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
  Tensor got = kl_divergence(p, q);
  CHECK(got.item() == doctest::Approx(kl_divergence(p, q.values())).epsilon(1e-12));

  Tape tape;
  TapeScope scope(tape);
  tape.watch(q);
  Tensor loss = kl_divergence(p, q);
  backward(loss);
  bool any_nonzero = false;
  for (double g : q.grad()) any_nonzero = any_nonzero || g != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("bernoulli kl sums per-dimension two-term divergences") {
  std::vector<double> p = {1.0, 0.0, 0.6};
  std::vector<double> q = {0.8, 0.3, 0.5};
  double expected = 0.0;
  expected += 1.0 * std::log(1.0 / 0.8);
  expected += 1.0 * std::log(1.0 / 0.7);
  expected += 0.6 * std::log(0.6 / 0.5) + 0.4 * std::log(0.4 / 0.5);
  CHECK(bernoulli_kl_sum(p, q) == doctest::Approx(expected).epsilon(1e-12));
  Tensor qt({3}, {0.8, 0.3, 0.5});
  CHECK(bernoulli_kl_sum(p, qt).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("initial snapshot holds gold one-hot and multi-hot rows") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);
  snap.validate();
  CHECK(snap.epoch == 0);
  CHECK(snap.size() == 2);
  // Example 1 has two intents: both columns are 1 at every token.
  const int vi = vocab.intent_count();
  for (int t = 0; t < 2; ++t) {
    CHECK(snap.intent_rows[1][static_cast<std::size_t>(t * vi +
                                                       *vocab.find_intent("BOOK"))] == 1.0);
    CHECK(snap.intent_rows[1][static_cast<std::size_t>(t * vi +
                                                       *vocab.find_intent("LIST"))] == 1.0);
  }
}

TEST_CASE("epoch-1 identity: L_SKL equals mean negative log gold probability") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);

  std::mt19937_64 rng(5);
  std::vector<Tensor> current;
  std::vector<int> ids = {0, 1};
  for (const Utterance& u : train) {
    current.push_back(random_simplex_rows(u.length(), vocab.slot_tag_count(), rng));
  }
  const double loss = l_skl(snap, ids, current).item();

  double expected = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    double per_utt = 0.0;
    for (int t = 0; t < train[i].length(); ++t) {
      const int gold = *vocab.find_slot_tag(train[i].slot_tags[static_cast<std::size_t>(t)]);
      per_utt += -std::log(current[i](t, gold));
    }
    expected += per_utt / train[i].length();
  }
  expected /= static_cast<double>(train.size());
  CHECK(loss == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("losses are non-negative and vanish when predictions equal the snapshot") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  std::mt19937_64 rng(7);

  // Build a snapshot from arbitrary smooth predictions, then feed the same
  // values back as the current predictions.
  std::vector<std::vector<double>> slot_rows, intent_rows;
  std::vector<Tensor> slot_cur, intent_cur;
  for (const Utterance& u : train) {
    Tensor s = random_simplex_rows(u.length(), vocab.slot_tag_count(), rng);
    Tensor p({u.length(), vocab.intent_count()});
    fill_uniform(p, rng, 0.1, 0.9);
    slot_rows.push_back(s.values());
    intent_rows.push_back(p.values());
    slot_cur.push_back(s);
    intent_cur.push_back(p);
  }
  PredictionSnapshot snap = make_snapshot(slot_rows, intent_rows,
                                          vocab.slot_tag_count(),
                                          vocab.intent_count(), 3);
  std::vector<int> ids = {0, 1};
  CHECK(l_skl(snap, ids, slot_cur).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(l_ikl(snap, ids, intent_cur).item() == doctest::Approx(0.0).epsilon(1e-12));

  // Perturbed predictions move both losses strictly above zero.
  std::vector<Tensor> slot_other, intent_other;
  for (const Utterance& u : train) {
    slot_other.push_back(random_simplex_rows(u.length(), vocab.slot_tag_count(), rng));
    Tensor p({u.length(), vocab.intent_count()});
    fill_uniform(p, rng, 0.1, 0.9);
    intent_other.push_back(p);
  }
  CHECK(l_skl(snap, ids, slot_other).item() > 0.0);
  CHECK(l_ikl(snap, ids, intent_other).item() > 0.0);
}

TEST_CASE("missing snapshot example is a contract error") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);
  std::mt19937_64 rng(9);
  std::vector<Tensor> current = {
      random_simplex_rows(2, vocab.slot_tag_count(), rng)};
  std::vector<int> bad_ids = {5};
  CHECK_THROWS_AS(l_skl(snap, bad_ids, current), ContractError);
}

TEST_CASE("no gradient reaches snapshot values") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);
  const std::vector<std::vector<double>> before = snap.slot_rows;

  std::mt19937_64 rng(11);
  std::vector<Tensor> current;
  std::vector<int> ids = {0, 1};
  for (const Utterance& u : train) {
    current.push_back(random_simplex_rows(u.length(), vocab.slot_tag_count(), rng));
  }
  Tape tape;
  TapeScope scope(tape);
  for (Tensor& t : current) tape.watch(t);
  Tensor loss = l_skl(snap, ids, current);
  backward(loss);
  for (const Tensor& t : current) {
    bool any = false;
    for (double g : t.grad()) any = any || g != 0.0;
    CHECK(any);
  }
  CHECK(snap.slot_rows == before);  // raw values, untouched by backward
}

TEST_CASE("grad_check through both distillation losses") {
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);
  std::mt19937_64 rng(13);
  std::vector<int> ids = {0, 1};

  std::vector<Tensor> slot_cur;
  for (const Utterance& u : train) {
    slot_cur.push_back(random_simplex_rows(u.length(), vocab.slot_tag_count(), rng));
  }
  auto f_slot = [&](std::vector<Tensor>& in) { return l_skl(snap, ids, in); };
  CHECK(grad_check(f_slot, slot_cur) < 1e-4);

  std::vector<Tensor> intent_cur;
  for (const Utterance& u : train) {
    Tensor p({u.length(), vocab.intent_count()});
    fill_uniform(p, rng, 0.2, 0.8);
    intent_cur.push_back(p);
  }
  auto f_intent = [&](std::vector<Tensor>& in) { return l_ikl(snap, ids, in); };
  CHECK(grad_check(f_intent, intent_cur) < 1e-4);
}

TEST_CASE("snapshot persists through the checkpoint container") {
  namespace fs = std::filesystem;
  std::vector<Utterance> train = tiny_train();
  Vocabulary vocab = build_vocabularies(train);
  PredictionSnapshot snap = initial_snapshot(train, vocab);
  snap.epoch = 4;
  const fs::path path = fs::temp_directory_path() / "mmcl_snapshot_test.bin";
  save_snapshot(path, snap);
  PredictionSnapshot loaded = load_snapshot(path);
  CHECK(loaded.epoch == 4);
  CHECK(loaded.slot_vocab == snap.slot_vocab);
  CHECK(loaded.intent_vocab == snap.intent_vocab);
  CHECK(loaded.slot_rows == snap.slot_rows);
  CHECK(loaded.intent_rows == snap.intent_rows);
  fs::remove(path);
}

}  // TEST_SUITE distill
