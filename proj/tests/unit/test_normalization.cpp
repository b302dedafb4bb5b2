// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "starplus/normalization.hpp"
#include "test_util.hpp"

using namespace starplus;
using test::code_of;
using test::weighted_sum;

namespace {

NormLayer make_norm(ParamStore& store, NormKind kind, std::size_t dim, std::size_t domains = 1,
                    PartitionMoments moments = PartitionMoments::per_domain) {
  NormConfig cfg;
  cfg.kind = kind;
  cfg.dim = dim;
  cfg.num_domains = domains;
  cfg.moments = moments;
  return NormLayer::create(store, "norm", cfg);
}

/// Column-wise normalization over `rows` in extended precision (biased variance).
Matrix naive_group_norm(const Matrix& x, const std::vector<std::size_t>& rows, double eps) {
  Matrix out(x.rows(), x.cols());
  const long double n = static_cast<long double>(rows.size());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    long double mean = 0;
    for (std::size_t r : rows) mean += x(r, j);
    mean /= n;
    long double var = 0;
    for (std::size_t r : rows) var += (x(r, j) - mean) * (x(r, j) - mean);
    var /= n;
    for (std::size_t r : rows) {
      out(r, j) = static_cast<double>((x(r, j) - mean) / std::sqrt(var + eps));
    }
  }
  return out;
}

std::vector<std::uint32_t> domains_of(std::initializer_list<std::uint32_t> ids) { return ids; }

/// Compares every param grad of `store` against central differences of
/// sum(norm(x) .* r), and the input gradient too.
void check_norm_gradients(NormLayer& norm, ParamStore& store, const Matrix& x,
                          const std::vector<std::uint32_t>& dom, const Matrix& r, double tol) {
  store.zero_grads();
  (void)norm.forward(x, dom);
  const Matrix dx = norm.backward(r);
  // Finite differences must not move the running statistics, so they are
  // restored after every evaluation.
  std::vector<Matrix> saved;
  for (Buffer* b : store.buffers()) saved.push_back(b->value);
  auto restore = [&] {
    std::size_t i = 0;
    for (Buffer* b : store.buffers()) b->value = saved[i++];
  };
  auto loss = [&] {
    const double v = weighted_sum(norm.forward(x, dom), r);
    restore();
    return v;
  };
  for (Param* p : store.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      CHECK(oracle::relative_error(p->grad.data()[i], oracle::numeric_partial(loss, *p, i)) < tol);
    }
  }
  Param xp("x", x.rows(), x.cols());
  xp.value = x;
  auto loss_x = [&] {
    const double v = weighted_sum(norm.forward(xp.value, dom), r);
    restore();
    return v;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    // Two-row groups give input gradients near 1e-6, where the difference
    // quotient is only good to ~1e-10 absolute.
    CHECK(oracle::relative_error(dx.data()[i], oracle::numeric_partial(loss_x, xp, i), 1e-4) < tol);
  }
}

}  // namespace

TEST_SUITE("normalization") {

TEST_CASE("none is the identity in both modes") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::none, 3);
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  const auto dom = domains_of({0, 0, 0, 0});
  CHECK(norm.forward(x, dom) == x);
  CHECK(norm.backward(x) == x);
  norm.set_mode(NormMode::inference);
  CHECK(norm.forward(x, dom) == x);
  CHECK(store.params().empty());
}

TEST_CASE("batch norm: two-row example") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 1);
  const Matrix out = norm.forward(Matrix::from_rows({{1}, {3}}), domains_of({0, 0}));
  // mean 2, biased variance 1
  const double expected = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(out(0, 0) == doctest::Approx(-expected).epsilon(1e-14));
  CHECK(out(1, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(norm.running_mean()->value(0, 0) == doctest::Approx(0.01 * 2.0).epsilon(1e-14));
  CHECK(norm.running_var()->value(0, 0) == doctest::Approx(0.99 + 0.01 * 1.0).epsilon(1e-14));
}

TEST_CASE("batch norm matches the extended-precision definition") {
  std::mt19937_64 rng(2);
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 5);
  const Matrix x = oracle::random_matrix(9, 5, rng, 3.0);
  const std::vector<std::uint32_t> dom(9, 0);
  std::vector<std::size_t> all(9);
  for (std::size_t i = 0; i < 9; ++i) all[i] = i;
  const Matrix ref = naive_group_norm(x, all, 1e-5);
  const Matrix got = norm.forward(x, dom);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(got.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
  }
  // Output columns: mean 0, biased variance 1 (up to eps).
  for (std::size_t j = 0; j < 5; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 9; ++i) m += got(i, j);
    m /= 9.0;
    for (std::size_t i = 0; i < 9; ++i) v += (got(i, j) - m) * (got(i, j) - m);
    CHECK(std::fabs(m) < 1e-12);
    CHECK(v / 9.0 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batch norm inference uses the running statistics") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 2);
  norm.running_mean()->value = Matrix::from_rows({{1, -1}});
  norm.running_var()->value = Matrix::from_rows({{4, 0.25}});
  norm.set_mode(NormMode::inference);
  const Matrix out = norm.forward(Matrix::from_rows({{3, 0}}), domains_of({0}));
  CHECK(out(0, 0) == doctest::Approx(2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-14));
  CHECK(out(0, 1) == doctest::Approx(1.0 / std::sqrt(0.25 + 1e-5)).epsilon(1e-14));
  // A single row is fine at inference time and stats stay untouched.
  CHECK(norm.running_mean()->value == Matrix::from_rows({{1, -1}}));
}

TEST_CASE("batch norm rejects a one-row training batch") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 2);
  CHECK(code_of([&] { (void)norm.forward(Matrix(1, 2), domains_of({0})); }) ==
        ErrorCode::degenerate_batch);
}

TEST_CASE("layer norm: per-row moments and example values") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::layer, 4);
  std::mt19937_64 rng(3);
  const Matrix x = oracle::random_matrix(6, 4, rng, 5.0);
  const std::vector<std::uint32_t> dom(6, 0);
  const Matrix out = norm.forward(x, dom);
  for (std::size_t i = 0; i < 6; ++i) {
    double m = 0.0, v = 0.0;
    for (double e : out.row(i)) m += e;
    m /= 4.0;
    for (double e : out.row(i)) v += (e - m) * (e - m);
    CHECK(std::fabs(m) < 1e-12);
    CHECK(v / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
  // Single row, no running stats, identical in inference mode.
  const Matrix one = Matrix::from_rows({{1, 2, 3, 4}});
  const Matrix a = norm.forward(one, domains_of({0}));
  norm.set_mode(NormMode::inference);
  CHECK(norm.forward(one, domains_of({0})) == a);
  CHECK(a(0, 0) == doctest::Approx(-1.5 / std::sqrt(1.25 + 1e-5)).epsilon(1e-14));
  CHECK(store.buffers().empty());
}

TEST_CASE("partition norm normalizes each domain with its own moments") {
  std::mt19937_64 rng(4);
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::partition, 3, 3);
  const Matrix x = oracle::random_matrix(7, 3, rng, 2.0);
  const auto dom = domains_of({0, 2, 0, 2, 0, 2, 2});
  const Matrix got = norm.forward(x, dom);
  const Matrix ref0 = naive_group_norm(x, {0, 2, 4}, 1e-5);
  const Matrix ref2 = naive_group_norm(x, {1, 3, 5, 6}, 1e-5);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t r : {0, 2, 4}) CHECK(got(r, j) == doctest::Approx(ref0(r, j)).epsilon(1e-12));
    for (std::size_t r : {1, 3, 5, 6}) CHECK(got(r, j) == doctest::Approx(ref2(r, j)).epsilon(1e-12));
  }
  // Domain 1 was absent: its running row keeps the initial values.
  CHECK(norm.running_mean()->value(1, 0) == 0.0);
  CHECK(norm.running_var()->value(1, 0) == 1.0);
  CHECK(norm.running_mean()->value(0, 0) != 0.0);
}

TEST_CASE("partition norm applies the per-domain affine") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::partition, 1, 2);
  norm.gamma()->value(0, 0) = 2.0;
  norm.beta()->value(0, 0) = 0.5;
  norm.gamma_p()->value(1, 0) = 3.0;
  norm.beta_p()->value(1, 0) = -1.0;
  const Matrix out = norm.forward(Matrix::from_rows({{1}, {3}, {1}, {3}}), domains_of({0, 0, 1, 1}));
  const double xhat = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(out(0, 0) == doctest::Approx(2.0 * -xhat + 0.5).epsilon(1e-14));
  CHECK(out(3, 0) == doctest::Approx(6.0 * xhat - 0.5).epsilon(1e-14));
}

TEST_CASE("partition norm with one domain is bitwise batch norm") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    ParamStore s1, s2;
    NormLayer bn = make_norm(s1, NormKind::batch, 4);
    NormLayer pn = make_norm(s2, NormKind::partition, 4, 1);
    const Matrix x = oracle::random_matrix(6, 4, rng);
    const Matrix up = oracle::random_matrix(6, 4, rng);
    const std::vector<std::uint32_t> dom(6, 0);
    CHECK(bn.forward(x, dom) == pn.forward(x, dom));
    CHECK(bn.backward(up) == pn.backward(up));
    CHECK(s1.find("norm/gamma")->grad == s2.find("norm/gamma")->grad);
    CHECK(s1.find("norm/beta")->grad == s2.find("norm/beta")->grad);
    CHECK(bn.running_mean()->value == pn.running_mean()->value);
  }
}

TEST_CASE("partition norm with shared moments uses whole-batch statistics") {
  std::mt19937_64 rng(6);
  ParamStore s1, s2;
  NormLayer bn = make_norm(s1, NormKind::batch, 3);
  NormLayer pn = make_norm(s2, NormKind::partition, 3, 2, PartitionMoments::shared);
  const Matrix x = oracle::random_matrix(5, 3, rng);
  const auto dom = domains_of({0, 1, 1, 0, 1});
  CHECK(bn.forward(x, dom) == pn.forward(x, dom));
  CHECK(pn.running_mean()->value.rows() == 1);
  // One row of a domain is fine here: the group is the whole batch.
  (void)pn.forward(oracle::random_matrix(3, 3, rng), domains_of({0, 1, 1}));
}

TEST_CASE("partition norm errors") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::partition, 2, 3);
  CHECK(code_of([&] {
          (void)norm.forward(Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}}), domains_of({0, 0, 1}));
        }) == ErrorCode::degenerate_batch);
  CHECK(code_of([&] { (void)norm.forward(Matrix(2, 2), domains_of({0, 3})); }) == ErrorCode::index);
  CHECK(code_of([&] { (void)norm.forward(Matrix(2, 3), domains_of({0, 0})); }) ==
        ErrorCode::dimension);
  CHECK(code_of([&] { (void)norm.forward(Matrix(2, 2), domains_of({0})); }) == ErrorCode::dimension);
  CHECK(code_of([&] { (void)norm.backward(Matrix(2, 2)); }) == ErrorCode::state);
  NormConfig bad;
  bad.kind = NormKind::batch;
  bad.dim = 2;
  bad.momentum = 1.0;
  ParamStore s2;
  CHECK(code_of([&] { (void)NormLayer::create(s2, "n", bad); }) == ErrorCode::config);
}

TEST_CASE("norm gradients match central differences") {
  std::mt19937_64 rng(7);
  struct Case {
    NormKind kind;
    std::size_t domains;
    PartitionMoments moments;
  };
  const Case cases[] = {
      {NormKind::batch, 1, PartitionMoments::per_domain},
      {NormKind::layer, 1, PartitionMoments::per_domain},
      {NormKind::partition, 3, PartitionMoments::per_domain},
      {NormKind::partition, 3, PartitionMoments::shared},
  };
  for (const Case& c : cases) {
    CAPTURE(to_string(c.kind));
    ParamStore store;
    NormLayer norm = make_norm(store, c.kind, 4, c.domains, c.moments);
    for (Param* p : store.params()) {
      for (double& v : p->value.data()) v += 0.3 * oracle::random_matrix(1, 1, rng)(0, 0);
    }
    const Matrix x = oracle::random_matrix(8, 4, rng, 2.0);
    const auto dom = c.domains == 1 ? std::vector<std::uint32_t>(8, 0)
                                    : domains_of({0, 1, 2, 0, 1, 2, 2, 0});
    const Matrix r = oracle::random_matrix(8, 4, rng);
    check_norm_gradients(norm, store, x, dom, r, 1e-5);
  }
}

TEST_CASE("inference-mode backward treats the statistics as constants") {
  std::mt19937_64 rng(8);
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 3);
  norm.running_var()->value = Matrix::from_rows({{0.5, 2.0, 1.5}});
  norm.set_mode(NormMode::inference);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  const Matrix r = oracle::random_matrix(4, 3, rng);
  check_norm_gradients(norm, store, x, std::vector<std::uint32_t>(4, 0), r, 1e-6);
}

TEST_CASE("layer norm maps a constant row to zeros") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::layer, 3);
  CHECK(norm.forward(Matrix::from_rows({{2, 2, 2}}), domains_of({0})) == Matrix(1, 3));
}

TEST_CASE("zero upstream gives zero gradients, and absent domains get none") {
  std::mt19937_64 rng(10);
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::partition, 3, 3);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  (void)norm.forward(x, domains_of({0, 2, 0, 2}));
  const Matrix dx = norm.backward(Matrix(4, 3));
  for (double v : dx.data()) CHECK(v == 0.0);
  for (Param* p : store.params()) {
    for (double g : p->grad.data()) CHECK(g == 0.0);
  }
  (void)norm.forward(x, domains_of({0, 2, 0, 2}));
  (void)norm.backward(oracle::random_matrix(4, 3, rng));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(norm.gamma_p()->grad(1, j) == 0.0);
    CHECK(norm.beta_p()->grad(1, j) == 0.0);
    CHECK(norm.beta_p()->grad(0, j) != 0.0);
  }
}

TEST_CASE("inference mode has no batch coupling") {
  std::mt19937_64 rng(11);
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::partition, 3, 2);
  norm.running_mean()->value = oracle::random_matrix(2, 3, rng);
  norm.set_mode(NormMode::inference);
  const Matrix x = oracle::random_matrix(3, 3, rng);
  const Matrix out = norm.forward(x, domains_of({0, 1, 1}));
  const Matrix swapped = norm.forward(Matrix::from_rows({{x(2, 0), x(2, 1), x(2, 2)},
                                                         {x(0, 0), x(0, 1), x(0, 2)},
                                                         {x(1, 0), x(1, 1), x(1, 2)}}),
                                      domains_of({1, 0, 1}));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(swapped(0, j) == out(2, j));
    CHECK(swapped(1, j) == out(0, j));
    CHECK(swapped(2, j) == out(1, j));
  }
}

TEST_CASE("running mean approaches a repeated batch's mean monotonically") {
  ParamStore store;
  NormLayer norm = make_norm(store, NormKind::batch, 1);
  const Matrix x = Matrix::from_rows({{4}, {6}});
  double prev = 5.0;
  for (int i = 0; i < 20; ++i) {
    (void)norm.forward(x, domains_of({0, 0}));
    const double dist = std::fabs(norm.running_mean()->value(0, 0) - 5.0);
    CHECK(dist < prev);
    prev = dist;
  }
}

TEST_CASE("kind names round trip") {
  for (NormKind k : {NormKind::none, NormKind::batch, NormKind::layer, NormKind::partition}) {
    CHECK(parse_norm_kind(to_string(k)) == k);
  }
  CHECK(code_of([] { (void)parse_norm_kind("group"); }) == ErrorCode::config);
  CHECK(parse_partition_moments("shared") == PartitionMoments::shared);
}

}  // TEST_SUITE
