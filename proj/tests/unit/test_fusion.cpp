// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "starplus/fusion.hpp"
#include "test_util.hpp"

using namespace starplus;
using test::code_of;
using test::weighted_sum;

namespace {

constexpr std::size_t kDim = 3;
constexpr std::size_t kDomains = 3;

struct Fixture {
  ParamStore store;
  Fusion fusion;
  TowerOutputs towers;
  std::vector<std::uint32_t> domains{0, 2, 1, 2, 0};

  explicit Fixture(FusionConfig cfg, std::uint64_t seed = 1) {
    Rng rng(seed);
    fusion = Fusion::create(store, "fusion", cfg, kDim, kDomains, rng);
    // Move every param off its initial value so nothing sits at a symmetric point.
    std::mt19937_64 jitter(seed + 100);
    for (Param* p : store.params()) {
      const Matrix noise = oracle::random_matrix(p->value.rows(), p->value.cols(), jitter, 0.4);
      add_inplace(p->value, noise);
    }
    std::mt19937_64 data(seed + 200);
    towers.s_d = oracle::random_matrix(5, kDim, data);
    towers.s_s = oracle::random_matrix(5, kDim, data);
    towers.s_a = oracle::random_matrix(5, kDim, data);
  }
};

FusionConfig config(FusionType type) {
  FusionConfig cfg;
  cfg.type = type;
  cfg.c_d = 2.0;
  cfg.c_s = 3.0;
  cfg.c_a = -1.0;
  cfg.gate_hidden = 4;
  cfg.concat_head_widths = {5};
  return cfg;
}

double head(DenseLayer& layer, const Matrix& s, std::size_t row) {
  double v = layer.bias().value(0, 0);
  for (std::size_t j = 0; j < s.cols(); ++j) v += s(row, j) * layer.weight().value(j, 0);
  return v;
}

Matrix mlp_oracle(Mlp& mlp, const Matrix& x) {
  Matrix h = x;
  const auto& layers = mlp.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = oracle::affine(h, layers[l].weight().value, layers[l].bias().value);
    if (layers[l].activation() == Activation::relu) h = oracle::relu(h);
  }
  return h;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("adaptive constants lie on the simplex") {
  const auto c0 = adaptive_constants(0.0);
  CHECK(c0[0] == 0.5);
  CHECK(c0[1] == 0.25);
  CHECK(c0[2] == 0.25);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> w(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = i < 4 ? std::array<double, 4>{-40.0, 40.0, -800.0, 800.0}[i] : w(rng);
    const auto c = adaptive_constants(x);
    CHECK(std::fabs(c[0] + c[1] + c[2] - 1.0) <= 1e-15);
    for (double v : c) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(c[1] == c[2]);
  }
}

TEST_CASE("add combines the head outputs with fixed constants") {
  Fixture f(config(FusionType::add));
  const Matrix logits = f.fusion.forward(f.towers, f.domains);
  for (std::size_t i = 0; i < 5; ++i) {
    const double expected = 2.0 * head(f.fusion.head_d(), f.towers.s_d, i) +
                            3.0 * head(f.fusion.head_s(), f.towers.s_s, i) -
                            1.0 * head(f.fusion.head_a(), f.towers.s_a, i);
    CHECK(logits(i, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(f.fusion.domain_constants(1) == std::array<double, 3>{2.0, 3.0, -1.0});
}

TEST_CASE("adaptive add uses the constants of each row's domain") {
  Fixture f(config(FusionType::adaptive_add));
  f.fusion.domain_weights()->value = Matrix::from_rows({{0.0}, {2.0}, {-1.0}});
  const Matrix logits = f.fusion.forward(f.towers, f.domains);
  for (std::size_t i = 0; i < 5; ++i) {
    const double cd = 1.0 / (1.0 + std::exp(-f.fusion.domain_weights()->value(f.domains[i], 0)));
    const double cs = (1.0 - cd) / 2.0;
    const double expected = cd * head(f.fusion.head_d(), f.towers.s_d, i) +
                            cs * head(f.fusion.head_s(), f.towers.s_s, i) +
                            cs * head(f.fusion.head_a(), f.towers.s_a, i);
    CHECK(logits(i, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(f.fusion.domain_constants(0)[0] == 0.5);
}

TEST_CASE("gate weights are a per-domain softmax") {
  Fixture f(config(FusionType::gate));
  const Matrix logits = f.fusion.forward(f.towers, f.domains);
  const Matrix& g = f.fusion.last_gate_weights();
  REQUIRE(g.rows() == 5);
  REQUIRE(g.cols() == 3);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::fabs(g(i, 0) + g(i, 1) + g(i, 2) - 1.0) <= 1e-15);
    for (std::size_t t = 0; t < 3; ++t) CHECK(g(i, t) > 0.0);
  }
  // Rows 1 and 3 share domain 2.
  for (std::size_t t = 0; t < 3; ++t) CHECK(g(1, t) == g(3, t));
  CHECK(f.fusion.gate_weights(f.domains) == g);

  // Brute force: softmax(gate_net(onehot)) then head(g . s).
  Matrix onehot(5, kDomains);
  for (std::size_t i = 0; i < 5; ++i) onehot(i, f.domains[i]) = 1.0;
  const Matrix gl = mlp_oracle(f.fusion.gate_net(), onehot);
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0.0;
    for (std::size_t t = 0; t < 3; ++t) z += std::exp(gl(i, t));
    Matrix fused(1, kDim);
    for (std::size_t j = 0; j < kDim; ++j) {
      fused(0, j) = (std::exp(gl(i, 0)) * f.towers.s_d(i, j) + std::exp(gl(i, 1)) * f.towers.s_s(i, j) +
                     std::exp(gl(i, 2)) * f.towers.s_a(i, j)) / z;
    }
    CHECK(logits(i, 0) == doctest::Approx(head(f.fusion.gate_head(), fused, 0)).epsilon(1e-12));
  }
}

TEST_CASE("concat runs the head on the joined tower outputs") {
  Fixture f(config(FusionType::concat));
  const Matrix logits = f.fusion.forward(f.towers, f.domains);
  const Matrix* parts[3] = {&f.towers.s_d, &f.towers.s_s, &f.towers.s_a};
  const Matrix ref = mlp_oracle(f.fusion.concat_head(), hconcat(parts));
  REQUIRE(logits.cols() == 1);
  for (std::size_t i = 0; i < 5; ++i) CHECK(logits(i, 0) == doctest::Approx(ref(i, 0)).epsilon(1e-12));
}

TEST_CASE("fusion gradients match central differences") {
  for (FusionType type : {FusionType::add, FusionType::adaptive_add, FusionType::gate,
                          FusionType::concat}) {
    CAPTURE(to_string(type));
    Fixture f(config(type), 7);
    std::mt19937_64 rng(9);
    const Matrix r = oracle::random_matrix(5, 1, rng);
    f.store.zero_grads();
    (void)f.fusion.forward(f.towers, f.domains);
    const TowerOutputs grads = f.fusion.backward(r);
    auto loss = [&] { return weighted_sum(f.fusion.forward(f.towers, f.domains), r); };
    for (Param* p : f.store.params()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        CHECK(oracle::relative_error(p->grad.data()[i], oracle::numeric_partial(loss, *p, i)) < 1e-6);
      }
    }
    Matrix* inputs[3] = {&f.towers.s_d, &f.towers.s_s, &f.towers.s_a};
    const Matrix* analytic[3] = {&grads.s_d, &grads.s_s, &grads.s_a};
    for (int t = 0; t < 3; ++t) {
      Param probe("s", inputs[t]->rows(), inputs[t]->cols());
      probe.value = *inputs[t];
      auto loss_t = [&] {
        *inputs[t] = probe.value;
        return weighted_sum(f.fusion.forward(f.towers, f.domains), r);
      };
      for (std::size_t i = 0; i < probe.value.size(); ++i) {
        CHECK(oracle::relative_error(analytic[t]->data()[i], oracle::numeric_partial(loss_t, probe, i)) <
              1e-6);
      }
      *inputs[t] = probe.value;
    }
  }
}

TEST_CASE("adaptive weights only collect gradient from their own domain") {
  Fixture f(config(FusionType::adaptive_add));
  f.domains = {0, 0, 2, 0, 2};
  f.store.zero_grads();
  (void)f.fusion.forward(f.towers, f.domains);
  (void)f.fusion.backward(Matrix(5, 1, 1.0));
  CHECK(f.fusion.domain_weights()->grad(1, 0) == 0.0);
  CHECK(f.fusion.domain_weights()->grad(0, 0) != 0.0);
  CHECK(f.fusion.domain_weights()->grad(2, 0) != 0.0);
}

TEST_CASE("fusion errors") {
  ParamStore store;
  Rng rng(1);
  CHECK(code_of([&] { (void)Fusion::create(store, "f", config(FusionType::builtin), kDim, kDomains, rng); }) ==
        ErrorCode::config);
  FusionConfig bad = config(FusionType::gate);
  bad.gate_hidden = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::config);
  bad = config(FusionType::add);
  bad.c_s = std::nan("");
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::config);

  Fixture f(config(FusionType::adaptive_add));
  CHECK(code_of([&] { (void)f.fusion.backward(Matrix(5, 1)); }) == ErrorCode::state);
  const std::vector<std::uint32_t> out_of_range{0, 1, 3, 0, 0};
  CHECK(code_of([&] { (void)f.fusion.forward(f.towers, out_of_range); }) == ErrorCode::index);
  TowerOutputs narrow = f.towers;
  narrow.s_a = Matrix(5, kDim + 1);
  CHECK(code_of([&] { (void)f.fusion.forward(narrow, f.domains); }) == ErrorCode::dimension);
  CHECK(code_of([&] { (void)f.fusion.last_gate_weights(); }) == ErrorCode::state);
}

TEST_CASE("fusion names round trip") {
  for (FusionType t : {FusionType::builtin, FusionType::add, FusionType::adaptive_add,
                       FusionType::gate, FusionType::concat}) {
    CHECK(parse_fusion_type(to_string(t)) == t);
  }
  CHECK(code_of([] { (void)parse_fusion_type("mix"); }) == ErrorCode::config);
}

}  // TEST_SUITE
