#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "hdcgan/tensor.hpp"

using namespace hdc;
using testutil::grad_check;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape helpers") {
  CHECK(shape_size({2, 3, 4}) == 24);
  CHECK(shape_size({}) == 1);
  CHECK(shape_str({2, 3}) == "[2,3]");
}

TEST_CASE("rng determinism and seek") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(42);
  for (int i = 0; i < 37; ++i) c.next_u64();
  RngStream d(42);
  d.seek(c.counter());
  CHECK(c.next_u64() == d.next_u64());

  RngStream e(42, 37);
  e.next_u64();
  CHECK(e.counter() == 38);  // one draw consumed
}

TEST_CASE("rng uniform01 range and normal consumption") {
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u > 0.0);
    CHECK(u <= 1.0);
  }
  const std::uint64_t before = rng.counter();
  rng.normal();
  CHECK(rng.counter() == before + 2);
}

TEST_CASE("rng normal moments") {
  RngStream rng(11);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng uniform_below bounds and determinism") {
  RngStream rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_below(7) < 7);
  CHECK_THROWS_AS(rng.uniform_below(0), Error);

  RngStream x(5), y(5);
  for (int i = 0; i < 100; ++i) CHECK(x.uniform_below(13) == y.uniform_below(13));
}

TEST_CASE("rng permutation is a permutation") {
  RngStream rng(9);
  const auto p = rng.permutation(100);
  std::set<std::size_t> seen(p.begin(), p.end());
  CHECK(p.size() == 100);
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);
}

TEST_CASE("rng derive separates labels") {
  RngStream a = RngStream::derive(1, "latent");
  RngStream b = RngStream::derive(1, "noise/D");
  RngStream c = RngStream::derive(1, "latent");
  CHECK(a.next_u64() != b.next_u64());
  RngStream a2 = RngStream::derive(1, "latent");
  CHECK(a2.next_u64() == c.next_u64());
}

TEST_CASE("tensor construction and access") {
  TensorD t({2, 3}, 1.5);
  CHECK(t.shape() == Shape{2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (double v : t.data()) CHECK(v == 1.5);

  TensorD u({2, 2}, {1, 2, 3, 4});
  CHECK(u.at({0, 1}) == 2);
  CHECK(u.at({1, 0}) == 3);
  CHECK_THROWS_AS(TensorD({2, 2}, std::vector<double>{1, 2, 3}), Error);

  const TensorD s = TensorD::scalar(4.25);
  CHECK(s.item() == 4.25);
  CHECK_THROWS_AS(t.item(), Error);

  TensorD undef;
  CHECK_FALSE(undef.defined());
  CHECK_THROWS_AS(undef.shape(), Error);
}

TEST_CASE("detach cuts the graph") {
  TensorD x({2}, {1, 2}, true);
  TensorD y = x.detach();
  CHECK_FALSE(y.requires_grad());
  CHECK(y.data()[0] == 1);
  CHECK(y.node_id() != x.node_id());
}

TEST_CASE("elementwise values") {
  TensorD x({4}, {-1.0, -0.25, 0.5, 2.0});
  const TensorD ex = exp(x);
  const TensorD th = tanh(x);
  const TensorD sg = sigmoid(x);
  const TensorD lr = leaky_relu(x, 0.1);
  const TensorD sc = scale(x, -2.0);
  const TensorD cl = clamp(x, -0.5, 1.0);
  for (int i = 0; i < 4; ++i) {
    const double v = x.data()[i];
    CHECK(ex.data()[i] == doctest::Approx(std::exp(v)).epsilon(1e-12));
    CHECK(th.data()[i] == doctest::Approx(std::tanh(v)).epsilon(1e-12));
    CHECK(sg.data()[i] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-v))).epsilon(1e-12));
    CHECK(lr.data()[i] ==
          doctest::Approx(v > 0 ? v : 0.1 * v).epsilon(1e-12));
    CHECK(sc.data()[i] == doctest::Approx(-2.0 * v).epsilon(1e-12));
    CHECK(cl.data()[i] ==
          doctest::Approx(std::clamp(v, -0.5, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("log rejects non-positive input in checked mode") {
  TensorD x({2}, {1.0, -0.5});
  CHECK_THROWS_AS(log(x), Error);
}

TEST_CASE("broadcast shapes") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  TensorD b({3}, {10, 20, 30});
  const auto sum_ab = add(a, b);
  CHECK(sum_ab.shape() == Shape{2, 3});
  CHECK(sum_ab.data()[0] == 11);
  CHECK(sum_ab.data()[5] == 36);

  TensorD col({2, 1}, {100, 200});
  const auto s2 = add(a, col);
  CHECK(s2.data()[0] == 101);
  CHECK(s2.data()[3] == 204);

  TensorD bad({4}, 0.0);
  CHECK_THROWS_AS(add(a, bad), Error);
}

TEST_CASE("sum and mean") {
  TensorD a({2, 2}, {1, 2, 3, 4});
  CHECK(sum(a).item() == 10);
  CHECK(mean(a).item() == 2.5);
}

TEST_CASE("reshape preserves data, rejects bad sizes") {
  TensorD a({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto r = reshape(a, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK(r.data()[4] == 5);
  CHECK_THROWS_AS(reshape(a, {4, 2}), Error);
}

TEST_CASE("matmul matches naive loops") {
  RngStream rng(21);
  TensorD a = TensorD::normal({3, 4}, rng);
  TensorD b = TensorD::normal({4, 5}, rng);
  const auto c = matmul(a, b);
  CHECK(c.shape() == Shape{3, 5});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += a.at({i, k}) * b.at({k, j});
      CHECK(c.at({i, j}) == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(matmul(a, a), Error);
}

TEST_CASE("conv2d shape formula and known values") {
  // 1x1x3x3 input, 1x1x2x2 kernel of ones, stride 1, pad 0: each output
  // is the sum of a 2x2 patch.
  TensorD x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  TensorD k({1, 1, 2, 2}, {1, 1, 1, 1});
  const auto y = conv2d(x, k, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.data()[0] == 12);  // 1+2+4+5
  CHECK(y.data()[1] == 16);
  CHECK(y.data()[2] == 24);
  CHECK(y.data()[3] == 28);

  RngStream rng(5);
  TensorD x2 = TensorD::normal({2, 3, 9, 9}, rng);
  TensorD k2 = TensorD::normal({4, 3, 4, 4}, rng);
  const auto y2 = conv2d(x2, k2, 2, 1);
  CHECK(y2.shape() == Shape{2, 4, 4, 4});  // (9+2-4)/2+1
}

TEST_CASE("conv_transpose2d shape formula") {
  RngStream rng(6);
  TensorD x = TensorD::normal({2, 4, 4, 4}, rng);
  TensorD k = TensorD::normal({4, 3, 4, 4}, rng);
  const auto y = conv_transpose2d(x, k, 2, 1);
  CHECK(y.shape() == Shape{2, 3, 8, 8});  // (4-1)*2 - 2 + 4
}

TEST_CASE("conv transpose is the exact adjoint of conv") {
  RngStream rng(31);
  for (const std::size_t stride : {1, 2}) {
    for (const std::size_t pad : {0, 1}) {
      TensorD u = TensorD::normal({2, 3, 8, 8}, rng);
      TensorD k = TensorD::normal({5, 3, 4, 4}, rng);
      const auto cu = conv2d(u, k, stride, pad);
      TensorD v = TensorD::normal(cu.shape(), rng);
      const auto ctv = conv_transpose2d(v, k, stride, pad);

      double lhs = 0, rhs = 0;
      for (std::size_t i = 0; i < cu.size(); ++i) lhs += cu.data()[i] * v.data()[i];
      for (std::size_t i = 0; i < u.size(); ++i) rhs += u.data()[i] * ctv.data()[i];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
}

TEST_CASE("backward accumulates through shared subexpressions") {
  TensorD x = TensorD::scalar(3.0, true);
  const auto y = mul(x, x);  // x used twice: dy/dx = 2x
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("repeated backward on one result throws in checked mode") {
  TensorD x = TensorD::scalar(2.0, true);
  const auto y = mul(x, x);
  y.backward();
  CHECK_THROWS_AS(y.backward(), Error);
}

TEST_CASE("backward requires a scalar root") {
  TensorD x({2}, {1, 2}, true);
  const auto y = scale(x, 2.0);
  CHECK_THROWS_AS(y.backward(), Error);
}

TEST_CASE("clamp gradient gates at the boundaries") {
  TensorD x({3}, {-1.0, 0.3, 2.0}, true);
  const auto y = sum(clamp(x, -0.5, 1.0));
  y.backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("gradients: linear ops to 1e-6") {
  RngStream rng(101);

  SUBCASE("add sub neg scale with broadcast") {
    TensorD a = TensorD::normal({2, 3}, rng);
    TensorD b = TensorD::normal({3}, rng);
    std::vector<TensorD> leaves{a, b};
    auto r = grad_check(leaves, [&] {
      return sum(scale(sub(add(a, b), neg(b)), 1.7));
    });
    CHECK(r.max_err < 1e-6);
  }
  SUBCASE("mul broadcast both sides") {
    TensorD a = TensorD::normal({2, 3}, rng);
    TensorD b = TensorD::normal({2, 1}, rng);
    std::vector<TensorD> leaves{a, b};
    auto r = grad_check(leaves, [&] { return sum(mul(a, b)); });
    CHECK(r.max_err < 1e-6);
  }
  SUBCASE("mean reshape") {
    TensorD a = TensorD::normal({2, 6}, rng);
    std::vector<TensorD> leaves{a};
    auto r = grad_check(leaves, [&] { return mean(reshape(a, {3, 4})); });
    CHECK(r.max_err < 1e-6);
  }
  SUBCASE("matmul") {
    TensorD a = TensorD::normal({3, 4}, rng);
    TensorD b = TensorD::normal({4, 2}, rng);
    TensorD w = TensorD::normal({3, 2}, rng);  // weights the output sum
    std::vector<TensorD> leaves{a, b};
    auto r = grad_check(leaves, [&] { return sum(mul(matmul(a, b), w)); });
    CHECK(r.max_err < 1e-6);
  }
  SUBCASE("conv2d") {
    TensorD x = TensorD::normal({2, 2, 6, 6}, rng);
    TensorD k = TensorD::normal({3, 2, 4, 4}, rng);
    TensorD w = TensorD::normal({2, 3, 3, 3}, rng);
    std::vector<TensorD> leaves{x, k};
    auto r = grad_check(leaves, [&] { return sum(mul(conv2d(x, k, 2, 1), w)); });
    CHECK(r.max_err < 1e-6);
  }
  SUBCASE("conv_transpose2d") {
    TensorD x = TensorD::normal({2, 3, 3, 3}, rng);
    TensorD k = TensorD::normal({3, 2, 4, 4}, rng);
    TensorD w = TensorD::normal({2, 2, 6, 6}, rng);
    std::vector<TensorD> leaves{x, k};
    auto r = grad_check(leaves, [&] {
      return sum(mul(conv_transpose2d(x, k, 2, 1), w));
    });
    CHECK(r.max_err < 1e-6);
  }
}

TEST_CASE("gradients: nonlinear ops to 1e-4") {
  RngStream rng(102);

  SUBCASE("exp tanh sigmoid") {
    TensorD a = TensorD::normal({2, 4}, rng);
    std::vector<TensorD> leaves{a};
    auto r = grad_check(leaves, [&] {
      return sum(add(exp(a), add(tanh(a), sigmoid(a))));
    });
    CHECK(r.max_err < 1e-4);
  }
  SUBCASE("log on positive input") {
    TensorD a({4}, {0.5, 1.5, 2.25, 0.75});
    std::vector<TensorD> leaves{a};
    auto r = grad_check(leaves, [&] { return sum(log(a)); });
    CHECK(r.max_err < 1e-4);
  }
  SUBCASE("leaky_relu away from the kink") {
    TensorD a({4}, {-1.2, -0.4, 0.3, 1.8});
    std::vector<TensorD> leaves{a};
    auto r = grad_check(leaves, [&] { return sum(leaky_relu(a, 0.2)); });
    CHECK(r.max_err < 1e-4);
  }
  SUBCASE("clamp strictly inside") {
    TensorD a({3}, {-0.3, 0.1, 0.4});
    std::vector<TensorD> leaves{a};
    auto r = grad_check(leaves, [&] { return sum(clamp(a, -0.5, 0.5)); });
    CHECK(r.max_err < 1e-4);
  }
}

TEST_CASE("float tensors run the same graph machinery") {
  RngStream rng(55);
  TensorF x = TensorF::normal({2, 2}, rng, 0.0, 1.0, true);
  const auto y = mean(mul(x, x));
  y.backward();
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0f * x.data()[i] / 4.0f).epsilon(1e-5));
  }
}

TEST_SUITE_END();
