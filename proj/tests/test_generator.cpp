#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "advnlg/corpus.hpp"
#include "advnlg/generator.hpp"
#include "support/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <vector>

using namespace advnlg;
using advnlg::testing::run_gradcheck;

namespace {

struct TestModel {
  ParamStore shared{"shared"};
  ParamStore gen{"gen"};
  GeneratorParams G;
};

TestModel make_test_model(std::size_t vocab, std::size_t d_emb, std::size_t d_h,
                          std::uint64_t seed) {
  TestModel m;
  RngStream rng = RngStream(seed).split("init");
  Tensor& e = m.shared.add_xavier("E", vocab, d_emb, rng);
  m.G = make_generator(m.gen, e, d_h, rng);
  return m;
}

std::vector<Tensor> all_params(TestModel& m) {
  std::vector<Tensor> out;
  for (const auto& name : m.shared.names()) out.push_back(m.shared.get(name));
  for (const auto& name : m.gen.names()) out.push_back(m.gen.get(name));
  return out;
}

void sgd_step(ParamStore& store, double lr) {
  for (const auto& name : store.names()) {
    Tensor& p = store.get(name);
    if (!p.has_grad()) continue;
    auto& v = p.mutable_values();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    p.zero_grad();
  }
}

}  // namespace

TEST_CASE("encode returns one state per token and the final state") {
  TestModel m = make_test_model(6, 4, 5, 1);
  std::vector<int> ids{Vocabulary::kBos, Vocabulary::kEos};
  EncodeResult enc = encode(m.G, ids);
  CHECK(enc.states.shape() == Shape{2, 5});
  for (std::size_t j = 0; j < 5; ++j) {
    CHECK(enc.final.at(j) == enc.states.at(5 + j));
  }
  CHECK_THROWS_AS(encode(m.G, std::span<const int>{}), UsageError);
}

TEST_CASE("zero GRU weights give the zero fixed point") {
  TestModel m = make_test_model(6, 4, 5, 2);
  for (const auto& name : m.gen.names()) {
    auto& v = m.gen.get(name).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
  std::vector<int> ids{Vocabulary::kBos, 4, 5, Vocabulary::kEos};
  EncodeResult enc = encode(m.G, ids);
  for (double v : enc.states.values()) CHECK(v == 0.0);
}

TEST_CASE("encoder gradient w.r.t. embedding matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TestModel m = make_test_model(6, 3, 4, seed);
    std::vector<int> ids{Vocabulary::kBos, 4, Vocabulary::kEos};
    auto build = [&] { return sum(encode(m.G, ids).final); };
    CHECK(run_gradcheck(build, {m.shared.get("E")}) <= 1e-4);
  }
}

TEST_CASE("attend with a single encoder state returns that state") {
  Tensor h = Tensor::constant({1, 2}, {3.7, -1.2});
  Tensor states = Tensor::constant({1, 2}, {0.4, 0.9});
  Tensor c = attend(h, states);
  CHECK(c.at(0) == doctest::Approx(0.4));
  CHECK(c.at(1) == doctest::Approx(0.9));
}

TEST_CASE("attend over identical states returns that state") {
  Tensor h = Tensor::constant({1, 3}, {1, 2, 3});
  Tensor states = Tensor::constant({4, 3}, {0.5, -1, 2, 0.5, -1, 2, 0.5, -1, 2, 0.5, -1, 2});
  Tensor c = attend(h, states);
  CHECK(c.at(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(c.at(1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(c.at(2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("attend matches the hand-computed two-state example") {
  Tensor states = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor h = Tensor::constant({1, 2}, {10, 0});
  auto [context, weights] = attend_with_weights(h, states);
  CHECK(weights.at(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(context.at(0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(context.at(1)) <= 1e-4);
  double total = weights.at(0) + weights.at(1);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("decode_step yields a distribution and relaxed one-hot parity") {
  TestModel m = make_test_model(7, 4, 5, 3);
  std::vector<int> ids{Vocabulary::kBos, 4, Vocabulary::kEos};
  EncodeResult enc = encode(m.G, ids);
  DecoderState state{enc.final, enc.states};

  DecodeStepResult via_index = decode_step(m.G, 5, state);
  double total = 0;
  for (double v : via_index.probs.values()) {
    CHECK(v >= 0.0);
    total += v;
  }
  CHECK(std::abs(total - 1.0) <= 1e-9);

  std::vector<double> onehot(7, 0.0);
  onehot[5] = 1.0;
  DecodeStepResult via_relaxed =
      decode_step(m.G, Tensor::constant({1, 7}, onehot), state);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(via_index.probs.at(i) == via_relaxed.probs.at(i));  // bitwise
  }
}

TEST_CASE("decode_step gradient w.r.t. all parameters") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TestModel m = make_test_model(6, 3, 4, seed + 10);
    std::vector<int> ids{Vocabulary::kBos, 4, Vocabulary::kEos};
    auto build = [&] {
      EncodeResult enc = encode(m.G, ids);
      DecoderState state{enc.final, enc.states};
      DecodeStepResult step = decode_step(m.G, 5, state);
      return safe_log(pick(step.probs, 3));
    };
    CHECK(run_gradcheck(build, all_params(m)) <= 1e-4);
  }
}

TEST_CASE("teacher-forced loss is log |V| under the uniform model") {
  TestModel m = make_test_model(9, 4, 5, 4);
  for (ParamStore* store : {&m.gen}) {
    for (const auto& name : store->names()) {
      auto& v = store->get(name).mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  // Zero weights: logits are all zero, p is uniform; one scored step.
  std::vector<int> input{Vocabulary::kBos, Vocabulary::kEos};
  std::vector<int> target{Vocabulary::kBos, Vocabulary::kEos};
  Tensor loss = teacher_forced_loss(m.G, input, target);
  CHECK(loss.value() == doctest::Approx(std::log(9.0)).epsilon(1e-12));

  std::vector<int> too_short{Vocabulary::kBos};
  CHECK_THROWS_AS(teacher_forced_loss(m.G, input, too_short), UsageError);
}

TEST_CASE("nll_sum matches hand-set distributions") {
  Tensor p1 = Tensor::constant({1, 4}, {0.5, 0.25, 0.125, 0.125});
  Tensor p2 = Tensor::constant({1, 4}, {0.25, 0.25, 0.25, 0.25});
  std::vector<Tensor> steps{p1, p2};
  std::vector<int> gold{0, 1};
  CHECK(nll_sum(steps, gold).value() ==
        doctest::Approx(-(std::log(0.5) + std::log(0.25))).epsilon(1e-12));

  // Probability 1 on every gold token gives exactly zero loss.
  Tensor exact = Tensor::constant({1, 2}, {0.0, 1.0});
  std::vector<Tensor> sure{exact, exact};
  std::vector<int> gold2{1, 1};
  CHECK(nll_sum(sure, gold2).value() == 0.0);
}

TEST_CASE("full teacher-forced loss gradient matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TestModel m = make_test_model(6, 3, 4, seed + 20);
    std::vector<int> input{Vocabulary::kBos, 4, 5, Vocabulary::kEos};
    std::vector<int> target{Vocabulary::kBos, 5, 4, Vocabulary::kEos};
    auto build = [&] { return teacher_forced_loss(m.G, input, target); };
    CHECK(run_gradcheck(build, all_params(m)) <= 1e-4);
  }
}

TEST_CASE("cross-entropy decreases monotonically under small-step descent") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TestModel m = make_test_model(8, 4, 6, seed + 30);
    std::vector<int> input{Vocabulary::kBos, 4, 6, Vocabulary::kEos};
    std::vector<int> target{Vocabulary::kBos, 7, 5, 4, Vocabulary::kEos};
    double prev = 1e300;
    for (int step = 0; step < 50; ++step) {
      GradientTape tape;
      Tensor loss = teacher_forced_loss(m.G, input, target);
      tape.backward(loss);
      CHECK(loss.value() < prev);
      prev = loss.value();
      sgd_step(m.gen, 1e-3);
      sgd_step(m.shared, 1e-3);
    }
  }
}

TEST_CASE("greedy decode respects max_len and is deterministic") {
  TestModel m = make_test_model(7, 4, 5, 6);
  std::vector<int> ids{Vocabulary::kBos, 4, Vocabulary::kEos};
  std::vector<int> one = greedy_decode(m.G, ids, 1);
  CHECK(one.size() == 1);
  std::vector<int> a = greedy_decode(m.G, ids, 12);
  std::vector<int> b = greedy_decode(m.G, ids, 12);
  CHECK(a == b);
  CHECK(a.size() <= 12);
}

TEST_CASE("an overfit model reproduces its training pair greedily") {
  TestModel m = make_test_model(9, 10, 20, 7);
  std::vector<int> input{Vocabulary::kBos, 4, 5, Vocabulary::kEos};
  std::vector<int> target{Vocabulary::kBos, 6, 7, 8, 6, Vocabulary::kEos};
  double loss_val = 1e9;
  for (int step = 0; step < 500 && loss_val > 0.05; ++step) {
    GradientTape tape;
    Tensor loss = teacher_forced_loss(m.G, input, target);
    tape.backward(loss);
    loss_val = loss.value();
    rmsprop_step(m.gen, 2e-3, 0.9, 1e-8);
    rmsprop_step(m.shared, 2e-3, 0.9, 1e-8);
  }
  CHECK(loss_val <= 0.05);
  std::vector<int> decoded = greedy_decode(m.G, input, 10);
  CHECK(decoded == std::vector<int>{6, 7, 8, 6, Vocabulary::kEos});
}

TEST_CASE("attention weights stay a valid distribution while decoding") {
  TestModel m = make_test_model(7, 4, 5, 8);
  std::vector<int> ids{Vocabulary::kBos, 4, 5, 6, Vocabulary::kEos};
  EncodeResult enc = encode(m.G, ids);
  DecoderState state{enc.final, enc.states};
  for (int step = 0; step < 4; ++step) {
    auto [context, weights] = attend_with_weights(state.hidden, state.encoder_states);
    double total = 0;
    for (double w : weights.values()) {
      CHECK(w >= 0.0);
      total += w;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
    DecodeStepResult next = decode_step(m.G, 4, state);
    state = next.state;
  }
}

TEST_CASE("beam width 1 equals greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    TestModel m = make_test_model(8, 4, 6, seed + 40);
    std::vector<int> ids{Vocabulary::kBos, 4, 7, Vocabulary::kEos};
    std::vector<int> greedy = greedy_decode(m.G, ids, 8);
    auto beams = beam_decode(m.G, ids, 1, 8);
    REQUIRE(beams.size() == 1);
    CHECK(beams[0].tokens == greedy);
  }
}

TEST_CASE("exhaustive beam equals brute-force search over all sequences") {
  TestModel m = make_test_model(5, 3, 4, 9);
  std::vector<int> ids{Vocabulary::kBos, 4, Vocabulary::kEos};
  const std::size_t max_len = 3;
  const std::size_t vocab = 5;

  // Brute-force oracle: enumerate every sequence, score by chained
  // decode_step probabilities with the same EOS/truncation semantics.
  struct Best {
    std::vector<int> tokens;
    double score = -1e300;
  } best;
  EncodeResult enc = encode(m.G, ids);
  std::function<void(std::vector<int>&, double, const DecoderState&, int)> walk =
      [&](std::vector<int>& prefix, double sum, const DecoderState& state, int prev) {
        DecodeStepResult step = decode_step(m.G, prev, state);
        for (std::size_t j = 0; j < vocab; ++j) {
          const double s2 = sum + std::log(step.probs.at(j));
          prefix.push_back(static_cast<int>(j));
          const bool ended = static_cast<int>(j) == Vocabulary::kEos;
          if (ended || prefix.size() == max_len) {
            const double score = s2 / static_cast<double>(prefix.size());
            if (score > best.score) best = {prefix, score};
          }
          if (!ended && prefix.size() < max_len) {
            walk(prefix, s2, step.state, static_cast<int>(j));
          }
          prefix.pop_back();
        }
      };
  std::vector<int> prefix;
  DecoderState root{enc.final, enc.states};
  walk(prefix, 0.0, root, Vocabulary::kBos);

  auto beams = beam_decode(m.G, ids, 125, max_len);
  REQUIRE(!beams.empty());
  CHECK(beams[0].tokens == best.tokens);
  CHECK(beams[0].score == doctest::Approx(best.score).epsilon(1e-9));

  for (std::size_t i = 1; i < beams.size(); ++i) {
    CHECK(beams[i - 1].score >= beams[i].score);  // ranking contract
  }
  CHECK(beams.size() <= 125);
  for (const auto& b : beams) {
    const bool ends_eos = !b.tokens.empty() && b.tokens.back() == Vocabulary::kEos;
    CHECK((ends_eos || b.tokens.size() == max_len));
  }
}
