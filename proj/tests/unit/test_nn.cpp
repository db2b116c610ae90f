// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "therblig/error.hpp"
#include "therblig/nn/adam.hpp"
#include "therblig/nn/checkpoint.hpp"
#include "therblig/nn/gradcheck.hpp"
#include "therblig/nn/layers.hpp"
#include "therblig/nn/params.hpp"
#include "therblig/nn/tensor.hpp"
#include "therblig/rng.hpp"

#include "support/oracles.hpp"

using namespace tbk;
using namespace tbk::nn;
using namespace tbk::testing;

namespace {

constexpr double kGradTol = 1e-4;
constexpr int kSeeds = 20;

LstmParams<double> constant_lstm(Tape<double>& tape, Rng& rng, Eigen::Index d, Eigen::Index h) {
  return {tape.constant(random_matrix(rng, d, 4 * h, 0.5)), tape.constant(random_matrix(rng, h, 4 * h, 0.5)),
          tape.constant(random_matrix(rng, 1, 4 * h, 0.5))};
}

Md reverse_rows(const Md& m) { return m.colwise().reverse(); }

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("every primitive and layer matches central differences over 20 seeds") {
  for (const auto& c : primitive_cases()) {
    double worst = 0.0;
    for (int s = 0; s < kSeeds; ++s) worst = std::max(worst, check_case(c, static_cast<std::uint64_t>(s)));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst <= kGradTol);
  }
}

TEST_CASE("grad_check on a quadratic bowl") {
  ParamStore<double> store;
  Rng rng(3);
  store.add("x", random_matrix(rng, 2, 3));
  auto f = [](Tape<double>&, const Binding<double>& b) { return sum(mul(b["x"], b["x"])); };
  CHECK(grad_check(f, store).max_rel_error <= 1e-8);
}

TEST_CASE("matmul identity and shape errors") {
  Tape<double> tape;
  Rng rng(1);
  const Md m = random_matrix(rng, 3, 5);
  const auto out = matmul(tape.constant(Md::Identity(3, 3)), tape.constant(m));
  CHECK(out.value() == m);
  try {
    (void)matmul(tape.constant(Md::Zero(2, 3)), tape.constant(Md::Zero(4, 2)));
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2, 3)") != std::string::npos);
    CHECK(msg.find("(4, 2)") != std::string::npos);
  }
}

TEST_CASE("softmax and layer_norm invariants") {
  Tape<double> tape;
  const auto u = softmax(tape.constant(Md::Zero(1, 3)));
  for (int k = 0; k < 3; ++k) CHECK(u.value()(0, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng(2);
  const auto x = tape.constant(random_matrix(rng, 6, 9, 3.0));
  const auto s = softmax(x);
  for (Eigen::Index r = 0; r < 6; ++r) CHECK(std::abs(s.value().row(r).sum() - 1.0) <= 1e-6);
  // Shift invariance.
  const auto shifted = softmax(affine(x, 1.0, 5.0));
  CHECK((shifted.value() - s.value()).cwiseAbs().maxCoeff() <= 1e-6);

  const auto ln = layer_norm(x, tape.constant(Md::Ones(1, 9)), tape.constant(Md::Zero(1, 9)));
  for (Eigen::Index r = 0; r < 6; ++r) {
    const auto row = ln.value().row(r);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    CHECK(std::abs(mu) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("bce loss") {
  Tape<double> tape;
  Md y = Md::Zero(3, 7);
  y(0, 1) = y(1, 4) = y(2, 6) = 1.0;
  CHECK(bce_loss(tape.constant(y), tape.constant(y)).item() <= 1e-6);
  CHECK(bce_loss(tape.constant(Md::Constant(3, 7, 0.5)), tape.constant(y)).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Md p(4, 7), t = Md::Zero(4, 7);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform();
    if (trial % 10 == 0) p(0, 0) = 0.0;  // exercises the clamp
    for (Eigen::Index r = 0; r < 4; ++r) t(r, rng.uniform_int(0, 6)) = 1.0;
    double acc = 0.0;
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index c = 0; c < 7; ++c) {
        const double q = std::min(std::max(p(r, c), 1e-7), 1.0 - 1e-7);
        acc += -(t(r, c) * std::log(q) + (1.0 - t(r, c)) * std::log(1.0 - q));
      }
    CHECK(std::abs(bce_loss(tape.constant(p), tape.constant(t)).item() - acc / 28.0) <= 1e-9);
  }
}

TEST_CASE("lstm with zero parameters outputs zeros") {
  Tape<double> tape;
  Rng rng(4);
  const auto x = tape.constant(random_matrix(rng, 5, 4));
  const auto h = lstm_sequence(x, tape.constant(Md::Zero(4, 12)), tape.constant(Md::Zero(3, 12)),
                               tape.constant(Md::Zero(1, 12)), false);
  CHECK(h.value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fused lstm_sequence equals the composed cell") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    Tape<double> tape;
    const auto x = tape.constant(random_matrix(rng, 7, 4));
    const auto p = constant_lstm(tape, rng, 4, 3);
    for (bool rev : {false, true}) {
      const auto fused = lstm_sequence(x, p.w_input, p.w_hidden, p.bias, rev);
      auto h = tape.constant(Md::Zero(1, 3));
      auto c = tape.constant(Md::Zero(1, 3));
      for (int k = 0; k < 7; ++k) {
        const int t = rev ? 6 - k : k;
        const auto s = lstm_cell(slice(x, Axis::Rows, t, 1), h, c, p);
        h = s.h;
        c = s.c;
        CHECK((fused.value().row(t) - h.value()).cwiseAbs().maxCoeff() <= 1e-12);
      }
    }
  }
}

TEST_CASE("bilstm on reversed input swaps direction roles") {
  Rng rng(8);
  Tape<double> tape;
  Md half = random_matrix(rng, 3, 4);
  Md pal(6, 4);
  pal << half, reverse_rows(half);
  const auto fw = constant_lstm(tape, rng, 4, 3);
  const auto bw = constant_lstm(tape, rng, 4, 3);
  const auto x = tape.constant(pal);
  const Md out = bilstm_layer(x, fw, bw).value();
  const Md rev = bilstm_layer(tape.constant(reverse_rows(pal)), bw, fw).value();
  Md expect(6, 6);
  expect << reverse_rows(out.rightCols(3)), reverse_rows(out.leftCols(3));
  CHECK((rev - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("attention: single step weight and permutation equivariance") {
  Rng rng(9);
  Tape<double> tape;
  auto att = [&] {
    AttentionParams<double> p;
    for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) *w = tape.constant(random_matrix(rng, 8, 8, 0.4));
    for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = tape.constant(random_matrix(rng, 1, 8, 0.1));
    return p;
  }();
  std::vector<Md> weights;
  (void)multihead_attention(tape.constant(random_matrix(rng, 1, 8)), 2, att, &weights);
  REQUIRE(weights.size() == 2);
  for (const auto& w : weights) CHECK(w(0, 0) == 1.0);

  const Md x = random_matrix(rng, 5, 8);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  Md px(5, 8);
  for (int i = 0; i < 5; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  const Md y = multihead_attention(tape.constant(x), 2, att).value();
  const Md py = multihead_attention(tape.constant(px), 2, att).value();
  for (int i = 0; i < 5; ++i)
    CHECK((py.row(i) - y.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(multihead_attention(tape.constant(x), 3, att), ValidationError);
}

TEST_CASE("positional encoding values") {
  const auto pe = positional_encoding<double>(6, 8, 2);
  for (int pos = 0; pos < 6; ++pos)
    for (int i = 0; i < 4; ++i) {
      const double angle = (pos + 2) / std::pow(10000.0, 2.0 * i / 8.0);
      CHECK(pe(pos, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-12));
      CHECK(pe(pos, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-12));
    }
}

TEST_CASE("adam") {
  ParamStore<double> ps;
  ps.add("w", Md::Constant(2, 2, 0.5));
  AdamState<double> st;
  adam_step(ps, {Md::Zero(2, 2)}, st);
  CHECK(ps.at("w").value == Md::Constant(2, 2, 0.5));

  ParamStore<double> s1;
  s1.add("a", Md::Constant(1, 1, 1.0));
  s1.add("b", Md::Constant(1, 1, 1.0));
  AdamState<double> st1;
  adam_step(s1, {Md::Constant(1, 1, 3.0), Md::Constant(1, 1, -0.2)}, st1);
  CHECK(s1.at("a").value(0, 0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(s1.at("b").value(0, 0) == doctest::Approx(1.0 + 1e-3).epsilon(1e-6));

  ParamStore<double> s2;
  s2.add("ok", Md::Constant(1, 1, 1.0));
  s2.add("lstm.fw.wi", Md::Constant(1, 2, 1.0));
  AdamState<double> st2;
  Md bad(1, 2);
  bad << 0.1, std::nan("");
  try {
    adam_step(s2, {Md::Constant(1, 1, 1.0), bad}, st2);
    FAIL("expected RuntimeFault");
  } catch (const RuntimeFault& e) {
    CHECK(std::string(e.what()).find("lstm.fw.wi") != std::string::npos);
  }
  CHECK(s2.at("ok").value(0, 0) == 1.0);
}

TEST_CASE("global norm clipping") {
  std::vector<Md> g{Md::Constant(1, 1, 3.0), Md::Constant(1, 1, 4.0)};
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0](0, 0) == doctest::Approx(0.6));
  CHECK(g[1](0, 0) == doctest::Approx(0.8));
}

TEST_CASE("checkpoint round trip is byte exact") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "tbk_ckpt_test";
  fs::create_directories(dir);
  Rng rng(10);
  ParamStore<float> ps;
  ps.add("a", xavier_uniform(3, 5, rng));
  ps.add("b", normal_matrix(1, 7, rng, 2.0));
  ps.add("norm.mean", normal_matrix(1, 4, rng, 1.0), false);
  save_checkpoint(dir / "m.json", ps, R"({"note": "x"})");
  const auto loaded = load_checkpoint(dir / "m.json");
  REQUIRE(loaded.params.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded.params.entries()[i].name == ps.entries()[i].name);
    CHECK(loaded.params.entries()[i].trainable == ps.entries()[i].trainable);
    CHECK(loaded.params.entries()[i].value == ps.entries()[i].value);
  }
  save_checkpoint(dir / "n.json", loaded.params, loaded.metadata_json);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp(dir / "m.bin") == slurp(dir / "n.bin"));
  const auto hm = slurp(dir / "m.json");
  auto hn = slurp(dir / "n.json");
  const auto pos = hn.find("n.bin");
  REQUIRE(pos != std::string::npos);
  hn.replace(pos, 5, "m.bin");
  CHECK(hm == hn);
  fs::remove_all(dir);
}

TEST_CASE("forward evaluation is bit-reproducible") {
  Rng rng(12);
  const Md x = random_matrix(rng, 6, 8);
  AttentionParams<double> p;
  Tape<double> tape;
  for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) *w = tape.constant(random_matrix(rng, 8, 8, 0.4));
  for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = tape.constant(random_matrix(rng, 1, 8, 0.1));
  const Md a = multihead_attention(tape.constant(x), 2, p).value();
  const Md b = multihead_attention(tape.constant(x), 2, p).value();
  CHECK(a == b);
}

}  // TEST_SUITE
