#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ptgnn/encoders.hpp"
#include "ptgnn/graph.hpp"
#include "ptgnn/numerics/grad_check.hpp"
#include "ptgnn/numerics/optim.hpp"
#include "test_helpers.hpp"

using namespace ptgnn;
using ptgnn::testing::probe;
using ptgnn::testing::random_tensor;

namespace {

GradCheckOptions gc_opts() {
  GradCheckOptions o;
  o.eps = sizeof(real) == 4 ? 3e-3 : 1e-6;
  o.tol = sizeof(real) == 4 ? 1e-3 : 1e-5;
  return o;
}

EncoderConfig small_config(std::size_t in_depth = 1) {
  EncoderConfig c;
  c.modality = Modality::head;
  c.in_depth = in_depth;
  c.stages = {{3, 3, 2}, {4, 3, 2}, {2, 3, 1}};
  c.dropout = 0;
  return c;
}

// Shape oracle from the conv/pool formulas.
std::size_t expected_length(const EncoderConfig& c, std::size_t T) {
  for (const auto& s : c.stages) {
    T = (T + 2 * (s.kernel / 2) - s.kernel) / 1 + 1;
    T = (T - s.pool) / s.pool + 1;
  }
  return T;
}

AdjacencyParam fixed_adjacency(std::size_t n, std::vector<real> v) { return {Tensor({n, n}, std::move(v)), false}; }

Tensor eye_matrix(std::size_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1;
  return t;
}

}  // namespace

TEST_CASE("encoder receptive field and output length") {
  CHECK(EncoderConfig::defaults(Modality::eye).receptive_field() == 24);
  CHECK(EncoderConfig::defaults(Modality::head).receptive_field() == 24);
  CHECK(EncoderConfig::defaults(Modality::phy).receptive_field() == 9);
  auto c = EncoderConfig::defaults(Modality::eye);
  for (std::size_t T : {24u, 30u, 60u, 300u}) CHECK(c.output_length(T) == expected_length(c, T));
  CHECK(c.output_length(300) == 37);
  CHECK(EncoderConfig::defaults(Modality::phy).output_length(300) == 300);
}

TEST_CASE("encoder rejects windows shorter than the receptive field") {
  auto c = EncoderConfig::defaults(Modality::eye);
  try {
    c.validate(20);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("24") != std::string::npos);
  }
  CHECK_NOTHROW(c.validate(24));
  ParameterSet ps;
  ModalityEncoder enc(c, ps, "encoder.eye", 1);
  CHECK_THROWS_AS(enc.forward(Tensor::zeros({1, 16, 38, 2}), Mode::eval, 0), ConfigError);
}

TEST_CASE("param_count") {
  CHECK(stage_param_count(1, 2, 3) == 12);
  EncoderConfig none;
  CHECK_THROWS_AS(param_count(none), ConfigError);
  // Hand count, default eye config (input depth 2):
  //   stage 1: 16*2*5 + 16 + 32 = 208
  //   stage 2: 32*16*3 + 32 + 64 = 1632
  //   stage 3: 32*32*3 + 32 + 64 = 3168
  const auto c = EncoderConfig::defaults(Modality::eye);
  CHECK(param_count(c) == 208 + 1632 + 3168);
  ParameterSet ps;
  ModalityEncoder enc(c, ps, "encoder.eye", 3);
  CHECK(ps.scalar_count() == param_count(c));
}

TEST_CASE("encoder output shape") {
  auto c = EncoderConfig::defaults(Modality::head);
  c.in_depth = 1;
  ParameterSet ps;
  ModalityEncoder enc(c, ps, "encoder.head", 1);
  auto e = enc.forward(random_tensor({1, 30, 3, 1}, 5), Mode::eval, 0);
  CHECK(e.tensor.shape() == Shape{1, expected_length(c, 30), 3, 32});
  CHECK(e.modality == Modality::head);
  c.stages = {{16, 5, 2}, {32, 3, 2}, {32, 3, 2}};
  c.stages[0].pool = 1;
  ParameterSet ps2;
  ModalityEncoder enc2(c, ps2, "e", 1);
  auto e2 = enc2.forward(random_tensor({1, 16, 3, 1}, 5), Mode::eval, 0);
  CHECK(e2.tensor.shape() == Shape{1, expected_length(c, 16), 3, 32});
}

TEST_CASE("encoder trivial cases") {
  SUBCASE("zero input gives zero output in eval mode") {
    ParameterSet ps;
    ModalityEncoder enc(EncoderConfig::defaults(Modality::eye), ps, "encoder.eye", 2);
    auto e = enc.forward(Tensor::zeros({2, 24, 38, 2}), Mode::eval, 0);
    for (real v : e.tensor.data()) CHECK(v == 0);
  }
  SUBCASE("identity kernels keep a constant signal constant in time") {
    EncoderConfig c;
    c.modality = Modality::phy;
    c.in_depth = 1;
    c.stages = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
    c.dropout = 0;
    ParameterSet ps;
    ModalityEncoder enc(c, ps, "encoder.phy", 2);
    for (auto& st : enc.stages()) st.weight.data()[0] = 1;
    std::vector<real> v(10 * 3);
    for (std::size_t t = 0; t < 10; ++t)
      for (std::size_t n = 0; n < 3; ++n) v[t * 3 + n] = real(0.5) + real(n);
    auto e = enc.forward(Tensor({1, 10, 3, 1}, v), Mode::eval, 0);
    REQUIRE(e.tensor.shape() == Shape{1, 10, 3, 1});
    for (std::size_t t = 1; t < 10; ++t)
      for (std::size_t n = 0; n < 3; ++n) CHECK(e.tensor.at(t * 3 + n) == e.tensor.at(n));
  }
}

TEST_CASE("encoder is node-equivariant and window-local") {
  ParameterSet ps;
  auto c = small_config(2);
  ModalityEncoder enc(c, ps, "encoder.head", 7);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto x = random_tensor({2, 20, 4, 2}, seed);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    std::vector<Tensor> cols;
    for (auto p : perm) cols.push_back(slice(x, 2, p, 1));
    auto xp = concat(cols, 2);
    auto y = enc.forward(x, Mode::eval, 0).tensor;
    auto yp = enc.forward(xp, Mode::eval, 0).tensor;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      auto a = slice(y, 2, perm[i], 1), b = slice(yp, 2, i, 1);
      for (std::size_t j = 0; j < a.numel(); ++j) CHECK(a.at(j) == b.at(j));
    }
    // The same window placed in two batch rows encodes identically.
    auto x1 = slice(x, 0, 0, 1);
    auto pair = enc.forward(concat({x1, x1}, 0), Mode::eval, 0).tensor;
    auto r0 = slice(pair, 0, 0, 1), r1 = slice(pair, 0, 1, 1);
    for (std::size_t j = 0; j < r0.numel(); ++j) CHECK(r0.at(j) == r1.at(j));
  }
}

TEST_CASE("encoder gradients pass through all three stages") {
  ParameterSet ps;
  ModalityEncoder enc(small_config(), ps, "encoder.head", 11);
  const auto x = random_tensor({2, 20, 2, 1}, 3);
  auto params = ps.learnable();
  params.push_back({"x", x});
  auto rep = grad_check([&] { return probe(enc.forward(x, Mode::train, 0).tensor, 9); }, params, gc_opts());
  INFO(rep.worst_tensor, " ", rep.max_rel_error);
  CHECK(rep.passed);
  CHECK(rep.checked > 0);
}

TEST_CASE("gcn_forward examples") {
  SUBCASE("identity propagation") {
    auto E = random_tensor({2, 3, 4, 4}, 1, 0.0, 1.0);
    const auto I = eye_matrix(4);
    auto A = fixed_adjacency(4, std::vector<real>(I.data().begin(), I.data().end()));
    auto Z = gcn_forward(E, A, eye_matrix(4), eye_matrix(4));
    for (std::size_t i = 0; i < E.numel(); ++i) CHECK(Z.at(i) == E.at(i));
  }
  SUBCASE("two-node swap") {
    auto A = fixed_adjacency(2, {0, 1, 1, 0});
    auto E = Tensor::from({1, 1, 2, 2}, {1, 0, 0, 1});
    auto W = eye_matrix(2);
    auto h = relu(matmul(A.effective(), matmul(E, W)));
    CHECK(std::vector<real>(h.data().begin(), h.data().end()) == std::vector<real>{0, 1, 1, 0});
    auto Z = gcn_forward(E, A, W, W);
    CHECK(std::vector<real>(Z.data().begin(), Z.data().end()) == std::vector<real>{1, 0, 0, 1});
  }
  SUBCASE("zero input") {
    auto A = init_adjacency(3, 4);
    auto Z = gcn_forward(Tensor::zeros({1, 2, 3, 2}), A, random_tensor({2, 5}, 1), random_tensor({5, 3}, 2));
    CHECK(Z.shape() == Shape{1, 2, 3, 3});
    for (real v : Z.data()) CHECK(v == 0);
  }
  SUBCASE("node mismatch") {
    CHECK_THROWS_AS(gcn_forward(Tensor::zeros({1, 2, 3, 2}), init_adjacency(4, 1), eye_matrix(2), eye_matrix(2)),
                    DimensionError);
  }
}

TEST_CASE("gcn_forward matches a per-node summation oracle") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t N = 1 + seed % 4, B = 2, T = 3, D = 3, H = 4, O = 2;
    AdjacencyParam A{random_tensor({N, N}, seed * 7 + 1), seed % 2 == 1};
    auto E = random_tensor({B, T, N, D}, seed * 7 + 2);
    auto W1 = random_tensor({D, H}, seed * 7 + 3);
    auto W2 = random_tensor({H, O}, seed * 7 + 4);
    auto Z = gcn_forward(E, A, W1, W2);
    // Effective adjacency by hand.
    std::vector<double> a(N * N), deg(N, 0);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) a[i * N + j] = 0.5 * (A.raw.at(i * N + j) + A.raw.at(j * N + i));
    if (A.normalized) {
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) deg[i] += std::abs(a[i * N + j]);
      for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) a[i * N + j] /= std::sqrt((deg[i] + 1e-6) * (deg[j] + 1e-6));
    }
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t) {
        auto e = [&](std::size_t j, std::size_t k) { return double(E.at(((b * T + t) * N + j) * D + k)); };
        std::vector<double> hid(N * H, 0);
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t h = 0; h < H; ++h) {
            double acc = 0;
            for (std::size_t j = 0; j < N; ++j) {
              double ew = 0;
              for (std::size_t k = 0; k < D; ++k) ew += e(j, k) * W1.at(k * H + h);
              acc += a[i * N + j] * ew;
            }
            hid[i * H + h] = std::max(0.0, acc);
          }
        for (std::size_t i = 0; i < N; ++i)
          for (std::size_t o = 0; o < O; ++o) {
            double acc = 0;
            for (std::size_t j = 0; j < N; ++j) {
              double hw = 0;
              for (std::size_t h = 0; h < H; ++h) hw += hid[j * H + h] * W2.at(h * O + o);
              acc += a[i * N + j] * hw;
            }
            CHECK(std::abs(Z.at(((b * T + t) * N + i) * O + o) - acc) <= 1e-5);
          }
      }
  }
}

TEST_CASE("temporal_pool") {
  auto Z = Tensor::from({1, 2, 1, 1}, {1, 3});
  CHECK(temporal_pool(Z).item() == 2);
  auto one = random_tensor({2, 1, 3, 2}, 4);
  auto p = temporal_pool(one);
  for (std::size_t i = 0; i < one.numel(); ++i) CHECK(p.at(i) == one.at(i));
  auto x = random_tensor({2, 5, 3, 2}, 5);
  auto a = temporal_pool(scale(x, real(2.5))), b = scale(temporal_pool(x), real(2.5));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-6));
  CHECK_THROWS_AS(temporal_pool(Tensor::zeros({2, 3})), DimensionError);
}

TEST_CASE("init_adjacency") {
  auto one = init_adjacency(1, 3);
  CHECK(std::abs(one.effective().item() - 1) <= 0.01);
  auto a = init_adjacency(5, 9), b = init_adjacency(5, 9);
  for (std::size_t i = 0; i < 25; ++i) CHECK(a.raw.at(i) == b.raw.at(i));
  for (bool norm : {false, true}) {
    a.normalized = norm;
    auto e = a.effective();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) CHECK(e.at(i * 5 + j) == e.at(j * 5 + i));
  }
}

TEST_CASE("adjacency stays exactly symmetric under training") {
  for (bool norm : {false, true}) {
    ParameterSet ps;
    GraphModule g(Modality::phy, 3, 4, 4, 4, norm, ps, "graph.phy", 5);
    Adam opt(ps.learnable(), AdamHyper{0.05});
    for (int step = 0; step < 100; ++step) {
      auto E = random_tensor({2, 4, 3, 4}, 100 + step);
      Tape tape;
      Tensor loss;
      {
        auto rec = tape.record();
        loss = probe(g.forward({E, Modality::phy}), step);
      }
      opt.zero_grad();
      backward(loss);
      opt.step();
    }
    auto A = g.adjacency().effective();
    double worst = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, double(std::abs(A.at(i * 3 + j) - A.at(j * 3 + i))));
    CHECK(worst == 0);
  }
}

TEST_CASE("gcn gradients") {
  for (bool norm : {false, true}) {
    ParameterSet ps;
    GraphModule g(Modality::phy, 3, 2, 3, 2, norm, ps, "graph.phy", 8);
    auto E = random_tensor({2, 2, 3, 2}, 4);
    auto params = ps.learnable();
    params.push_back({"E", E});
    auto rep = grad_check([&] { return probe(g.forward({E, Modality::phy}), 1); }, params, gc_opts());
    INFO(rep.worst_tensor, " ", rep.max_rel_error);
    CHECK(rep.passed);
  }
}
