#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "mmcl/encoder.hpp"

using namespace mmcl;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.embed_dim = 6;
  cfg.lstm_hidden = 4;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  return cfg;
}

struct Fixture {
  ParameterStore store;
  std::mt19937_64 rng{12345};
  Encoder encoder;

  explicit Fixture(EncoderConfig cfg = small_config(), int vocab = 10)
      : encoder(store, cfg, vocab, rng) {}
};

void zero_params_with_prefix(ParameterStore& store, const std::string& prefix) {
  for (auto& [name, p] : store) {
    if (name.rfind(prefix, 0) == 0) {
      std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
    }
  }
}

void copy_params(ParameterStore& store, const std::string& from,
                 const std::string& to) {
  for (auto& [name, p] : store) {
    if (name.rfind(from, 0) == 0) {
      store.at(to + name.substr(from.size())).tensor.values() = p.tensor.values();
    }
  }
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("output shapes follow the config and E is H beside C") {
  Fixture fx;
  std::vector<int> ids = {2, 3, 4, 5};
  EncoderOutput out = fx.encoder.encode(ids);
  const int n = 4, two_h = 8, attn = 8;
  CHECK(out.H.shape() == Shape{n, two_h});
  CHECK(out.C.shape() == Shape{n, attn});
  CHECK(out.E.shape() == Shape{n, two_h + attn});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < two_h; ++c) CHECK(out.E(r, c) == out.H(r, c));
    for (int c = 0; c < attn; ++c) CHECK(out.E(r, two_h + c) == out.C(r, c));
  }
}

TEST_CASE("embedding returns the table rows") {
  Fixture fx;
  Tensor pad = fx.encoder.embed(std::vector<int>{0});
  const Tensor& table = fx.store.at("encoder/embedding").tensor;
  for (int c = 0; c < 6; ++c) CHECK(pad(0, c) == table(0, c));

  Tensor twice = fx.encoder.embed(std::vector<int>{7, 7});
  for (int c = 0; c < 6; ++c) CHECK(twice(0, c) == twice(1, c));

  CHECK_THROWS_AS(fx.encoder.embed(std::vector<int>{10}), IndexError);
}

TEST_CASE("embedding gradient is sparse over the looked-up rows") {
  Fixture fx;
  Tensor& table = fx.store.at("encoder/embedding").tensor;
  Tape tape;
  TapeScope scope(tape);
  tape.watch(table);
  table.zero_grad();
  std::vector<int> ids = {2, 5, 8, 3};
  Tensor emb = fx.encoder.embed(ids);
  // Loss reads only token 3 (id 3): gradient lives in row 3 alone.
  Tensor loss = sum_all(slice(emb, 0, 3, 4));
  backward(loss);
  for (int v = 0; v < 10; ++v) {
    for (int c = 0; c < 6; ++c) {
      const double g = table.grad()[static_cast<std::size_t>(v * 6 + c)];
      if (v == 3) CHECK(g == 1.0);
      else CHECK(g == 0.0);
    }
  }
}

TEST_CASE("all-zero lstm weights produce all-zero outputs") {
  Fixture fx;
  zero_params_with_prefix(fx.store, "encoder/lstm");
  std::vector<int> ids = {1, 2, 3};
  EncoderOutput out = fx.encoder.encode(ids);
  for (double v : out.H.values()) CHECK(v == 0.0);
}

TEST_CASE("a single token sees itself in both directions") {
  Fixture fx;
  copy_params(fx.store, "encoder/lstm/fwd", "encoder/lstm/bwd");
  std::vector<int> ids = {4};
  EncoderOutput out = fx.encoder.encode(ids);
  const int H = 4;
  for (int c = 0; c < H; ++c) CHECK(out.H(0, c) == out.H(0, H + c));
}

TEST_CASE("with shared weights, reversing the input swaps and reverses halves") {
  Fixture fx;
  copy_params(fx.store, "encoder/lstm/fwd", "encoder/lstm/bwd");
  std::mt19937_64 rng(3);
  const int n = 5, H = 4;
  Tensor inputs({n, 6});
  fill_uniform(inputs, rng, -1, 1);
  Tensor reversed({n, 6});
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < 6; ++c) reversed(t, c) = inputs(n - 1 - t, c);
  }

  // Run the BiLSTM twice through a probe built on the same parameters.
  ParameterStore probe_store;
  std::mt19937_64 prng(1);
  BiLstm probe(probe_store, "probe", 6, H, prng);
  copy_params(fx.store, "encoder/lstm/fwd", "encoder/lstm/fwd");  // no-op, clarity
  for (const char* dir : {"fwd", "bwd"}) {
    for (const char* leaf : {"w_x", "w_h", "b"}) {
      probe_store.at(std::string("probe/") + dir + "/" + leaf).tensor.values() =
          fx.store.at(std::string("encoder/lstm/") + dir + "/" + leaf)
              .tensor.values();
    }
  }
  Tensor out = probe.forward(inputs);
  Tensor out_rev = probe.forward(reversed);
  for (int t = 0; t < n; ++t) {
    for (int c = 0; c < H; ++c) {
      CHECK(out_rev(t, c) == doctest::Approx(out(n - 1 - t, H + c)).epsilon(1e-12));
      CHECK(out_rev(t, H + c) == doctest::Approx(out(n - 1 - t, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-token attention weight is exactly one") {
  Fixture fx;
  Tensor emb = fx.encoder.embed(std::vector<int>{5});
  ParameterStore astore;
  std::mt19937_64 arng(7);
  MultiHeadSelfAttention attn(astore, "attn", 6, 2, 4, arng);
  std::vector<Tensor> weights;
  Tensor c = attn.forward(emb, &weights);
  REQUIRE(weights.size() == 2);
  for (const Tensor& w : weights) {
    CHECK(w.shape() == Shape{1, 1});
    CHECK(w(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(c.shape() == Shape{1, 8});
}

TEST_CASE("attention rows are convex weights over the value rows") {
  ParameterStore astore;
  std::mt19937_64 rng(9);
  const int n = 5, d = 6, head_dim = 4;
  MultiHeadSelfAttention attn(astore, "attn", d, 2, head_dim, rng);
  Tensor inputs({n, d});
  fill_uniform(inputs, rng, -1, 1);
  std::vector<Tensor> weights;
  Tensor out = attn.forward(inputs, &weights);

  for (std::size_t h = 0; h < weights.size(); ++h) {
    const Tensor& w = weights[h];
    // Rows sum to 1 with non-negative entries.
    for (int r = 0; r < n; ++r) {
      double total = 0;
      for (int c = 0; c < n; ++c) {
        CHECK(w(r, c) >= 0.0);
        total += w(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
    // Outputs are those weights applied to V: convex combination of V rows.
    const std::string base = "attn/head" + std::to_string(h);
    Tensor v = matmul(inputs, astore.at(base + "/wv").tensor);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < head_dim; ++c) {
        double expect = 0;
        for (int j = 0; j < n; ++j) expect += w(r, j) * v(j, c);
        CHECK(out(r, static_cast<int>(h) * head_dim + c) ==
              doctest::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("evaluation mode is bitwise deterministic") {
  Fixture fx;
  std::vector<int> ids = {2, 9, 4};
  EncoderOutput a = fx.encoder.encode(ids);
  EncoderOutput b = fx.encoder.encode(ids);
  CHECK(std::memcmp(a.E.values().data(), b.E.values().data(),
                    a.E.numel() * sizeof(double)) == 0);
}

TEST_CASE("training dropout is seeded and scales kept values") {
  Fixture fx;
  std::mt19937_64 r1(5), r2(5);
  Tensor x = Tensor::full({50, 4}, 1.0);
  Tensor a = dropout(x, 0.4, r1);
  Tensor b = dropout(x, 0.4, r2);
  CHECK(a.values() == b.values());
  int zeros = 0;
  for (double v : a.values()) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.6));
  }
  CHECK(zeros > 20);
  CHECK(zeros < 140);
  // p = 0 is the identity.
  Tensor c = dropout(x, 0.0, r1);
  CHECK(c.values() == x.values());
}

TEST_CASE("grad_check through the full encoder stack") {
  Fixture fx;
  std::vector<int> ids = {2, 3, 7, 5};
  std::vector<Tensor> inputs;
  for (auto& [name, p] : fx.store) inputs.push_back(p.tensor);
  auto f = [&](std::vector<Tensor>&) {
    EncoderOutput out = fx.encoder.encode(ids);
    Tensor w(out.E.shape());
    std::mt19937_64 wrng(11);
    fill_uniform(w, wrng, 0.5, 1.5);
    return sum_all(mul(out.E, w));
  };
  CHECK(grad_check(f, inputs) < 1e-4);
}

}  // TEST_SUITE encoder
