#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "hcvae/tensor.hpp"

using namespace hcvae;

namespace {

// Plain triple-loop product, the scalar recomputation oracle.
std::vector<double> matmul_oracle(const std::vector<double>& a, int m, int k,
                                  const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p)
        out[static_cast<size_t>(i) * n + j] +=
            a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
  return out;
}

}  // namespace

TEST_CASE("matmul identity and orthogonal pick") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor prod = matmul(eye, m);
  for (size_t i = 0; i < 4; ++i) CHECK(prod.value_at(i) == m.value_at(i));

  Tensor row = Tensor::from_data({1, 2}, {1, 0});
  Tensor col = Tensor::from_data({2, 1}, {0, 1});
  CHECK(matmul(row, col).item() == 0.0);
}

TEST_CASE("matmul matches scalar recomputation oracle") {
  std::vector<double> a{1, 2, 3, 4}, b{5, 6};
  Tensor prod = matmul(Tensor::from_data({2, 2}, a), Tensor::from_data({2, 1}, b));
  auto expect = matmul_oracle(a, 2, 2, b, 1);
  CHECK(expect[0] == 17.0);
  CHECK(expect[1] == 39.0);
  CHECK(prod.value_at(0) == expect[0]);
  CHECK(prod.value_at(1) == expect[1]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul associativity on random 3-chains") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::randn({3, 4}, rng, 1.0);
    Tensor b = Tensor::randn({4, 5}, rng, 1.0);
    Tensor c = Tensor::randn({5, 2}, rng, 1.0);
    Tensor left = matmul(matmul(a, b), c);
    Tensor right = matmul(a, matmul(b, c));
    for (size_t i = 0; i < left.size(); ++i)
      CHECK(left.value_at(i) == doctest::Approx(right.value_at(i)).epsilon(1e-9));
  }
}

TEST_CASE("softmax rows: symmetry, large-logit stability, scalar oracle") {
  Tensor flat = softmax_rows(Tensor::from_data({1, 2}, {0, 0}));
  CHECK(flat.value_at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(flat.value_at(1) == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big = softmax_rows(Tensor::from_data({1, 2}, {1000, 1000}));
  CHECK(big.value_at(0) == doctest::Approx(0.5).epsilon(1e-15));

  // Scalar recomputation: exp(0)/(exp(0)+3) and 3/(1+3).
  Tensor mixed = softmax_rows(Tensor::from_data({1, 2}, {0.0, std::log(3.0)}));
  CHECK(mixed.value_at(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(mixed.value_at(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and shift-invariance") {
  Rng rng(3);
  Tensor x = Tensor::randn({6, 7}, rng, 3.0);
  Tensor y = softmax_rows(x);
  for (int i = 0; i < 6; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) s += y.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  Tensor shifted = softmax_rows(add_scalar(x, 123.456));
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(y.value_at(i) == doctest::Approx(shifted.value_at(i)).epsilon(1e-12));
}

TEST_CASE("backward of sum gives ones") {
  Tensor x = Tensor::from_data({3, 1}, {5, -1, 2}, true);
  backward(sum(x));
  for (size_t i = 0; i < 3; ++i) CHECK(x.grad_at(i) == 1.0);
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::from_data({2, 1}, {1, 2}, true);
  backward(sum(mul(x, x)));
  CHECK(x.grad_at(0) == 2.0);
  CHECK(x.grad_at(1) == 4.0);
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::from_data({2, 1}, {1, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), ContractError);
}

TEST_CASE("backward accumulates across calls; zero_grad resets") {
  Tensor x = Tensor::from_data({2, 1}, {3, 4}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  backward(loss);
  CHECK(x.grad_at(0) == 12.0);  // 2 * (2 * 3)
  x.zero_grad();
  backward(loss);
  CHECK(x.grad_at(0) == 6.0);
}

TEST_CASE("finite differences: constant and exact quadratic") {
  Tensor w = Tensor::from_data({3, 1}, {0.5, -1.5, 2.0}, true);
  CHECK(finite_diff_check([&] { return Tensor::scalar(7.0); }, {w}) == 0.0);
  CHECK(finite_diff_check([&] { return sum(mul(w, w)); }, {w}) < 1e-6);
}

TEST_CASE("composite loss gradient matches central differences") {
  Rng rng(7);
  Tensor w1 = Tensor::randn({4, 5}, rng, 0.5, true);
  Tensor b1 = Tensor::randn({1, 5}, rng, 0.5, true);
  Tensor w2 = Tensor::randn({5, 3}, rng, 0.5, true);
  Tensor x = Tensor::randn({6, 4}, rng, 1.0);
  auto build = [&] {
    Tensor h = tanh(add_rowvec(matmul(x, w1), b1));
    Tensor out = log_softmax_rows(matmul(h, w2));
    Tensor picked = gather_cols(out, {0, 1, 2, 0, 1, 2});
    return add(mean(neg(picked)), mean(mul(w2, w2)));
  };
  CHECK(finite_diff_check(build, {w1, b1, w2}) < 1e-4);
}

TEST_CASE("structure ops gradient check: concat, slice, gather, broadcast") {
  Rng rng(19);
  Tensor a = Tensor::randn({3, 2}, rng, 1.0, true);
  Tensor b = Tensor::randn({3, 2}, rng, 1.0, true);
  Tensor col = Tensor::randn({3, 1}, rng, 1.0, true);
  auto build = [&] {
    Tensor cat = concat_cols(a, exp(scale(b, 0.3)));
    Tensor sl = slice_cols(cat, 1, 2);
    Tensor g = gather_rows(sl, {2, 0, 1, 2});
    Tensor scaled = mul_colvec(slice_rows(g, 0, 3), col);
    return sum(mul(scaled, scaled));
  };
  CHECK(finite_diff_check(build, {a, b, col}) < 1e-4);
}

TEST_CASE("division and scalar-broadcast gradients") {
  Rng rng(23);
  Tensor a = Tensor::randn({2, 3}, rng, 1.0, true);
  Tensor b = add_scalar(Tensor::randn({2, 3}, rng, 0.2, false), 2.0);
  Tensor s = Tensor::from_data({1}, {1.7}, true);
  auto build = [&] {
    Tensor q = div(a, b);
    return sum(mul_scalar_t(sqrt(add_scalar(mul(q, q), 1.0)), s));
  };
  CHECK(finite_diff_check(build, {a, s}) < 1e-4);
}

TEST_CASE("committed values must be finite") {
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
  Tensor neg_one = Tensor::scalar(-1.0);
  CHECK_THROWS_AS(log(neg_one), NumericError);
  Tensor big = Tensor::scalar(1e308);
  CHECK_THROWS_AS(exp(big), NumericError);
}

TEST_CASE("shape and data length must agree") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
}

TEST_CASE("grad buffer matches data shape") {
  Tensor x = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
  backward(sum(x));
  CHECK(x.grad().size() == x.size());
}

TEST_CASE("non-leaf tensors reject mutation") {
  Tensor x = Tensor::from_data({2, 1}, {1, 2}, true);
  Tensor y = add(x, x);
  CHECK_THROWS_AS(y.values_mut(), ContractError);
}

TEST_CASE("log_softmax matches log of softmax") {
  Rng rng(5);
  Tensor x = Tensor::randn({4, 6}, rng, 2.0);
  Tensor a = log_softmax_rows(x);
  Tensor b = log(softmax_rows(x));
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a.value_at(i) == doctest::Approx(b.value_at(i)).epsilon(1e-10));
}

TEST_CASE("no-grad guard suppresses the tape") {
  Tensor x = Tensor::from_data({2, 1}, {1, 2}, true);
  Tensor loss;
  {
    NoGradGuard ng;
    loss = sum(mul(x, x));
  }
  CHECK_FALSE(loss.requires_grad());
}
