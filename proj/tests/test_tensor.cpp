#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cteg/gradcheck.hpp"
#include "cteg/optim.hpp"
#include "cteg/params.hpp"
#include "cteg/tensor.hpp"

using namespace cteg;
using Catch::Approx;

TEST_CASE("softmax of a constant row is uniform") {
  const Tensor y = softmax(Tensor::from({3}, {0.0, 0.0, 0.0}));
  for (int i = 0; i < 3; ++i) CHECK(y.at(i) == Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are non-negative and sum to one within 1e-12") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(12);
    for (auto& v : vals) v = uniform_real(rng, -30.0, 30.0);
    const Tensor y = softmax(Tensor::from({3, 4}, vals));
    for (std::size_t i = 0; i < 3; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(y.at(i, j) >= 0.0);
        row += y.at(i, j);
      }
      CHECK(std::fabs(row - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("sigmoid at zero is one half") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("squared euclidean distance by hand") {
  const Tensor a = Tensor::from({2}, {0.0, 0.0});
  const Tensor b = Tensor::from({2}, {1.0, 2.0});
  CHECK(squared_euclidean(a, b).value() == Approx(5.0));  // 1^2 + 2^2
}

TEST_CASE("ops do not mutate their inputs") {
  const Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  const std::vector<double> before = a.values();
  (void)softmax(a);
  (void)scale(a, 3.0);
  (void)transpose(a);
  (void)layer_norm(a, Tensor::from({2}, {1.0, 1.0}), Tensor::from({2}, {0.0, 0.0}));
  CHECK(a.values() == before);
}

TEST_CASE("backward of x*x at x=3 gives 6") {
  ParamStore store;
  Tensor x = store.create_zeros("x", {});
  x.mutable_values()[0] = 3.0;
  const Tensor loss = mul(x, x);
  backward(loss);
  CHECK(x.grad()[0] == Approx(6.0));
}

TEST_CASE("backward of sum(sigmoid(x)) at 0 gives 0.25 per element") {
  ParamStore store;
  Tensor x = store.create_zeros("x", {4});
  const Tensor loss = sum(sigmoid(x));
  backward(loss);
  for (double g : x.grad()) CHECK(g == Approx(0.25));  // sigma'(0) = 0.25
}

TEST_CASE("a disconnected parameter keeps a zero gradient") {
  ParamStore store;
  Rng rng(1);
  Tensor x = store.create("x", {3}, rng);
  Tensor unused = store.create("unused", {3}, rng);
  backward(sum(mul(x, x)));
  for (double g : unused.grad()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects non-scalar losses") {
  ParamStore store;
  Rng rng(1);
  Tensor x = store.create("x", {3}, rng);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), Error);
}

TEST_CASE("shape mismatches report both shapes and the op") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
  try {
    (void)matmul(a, b);
    FAIL("expected shape error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2,2]") != std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference checks, one per differentiable op plus a composition

TEST_CASE("grad_check: constant and linear functions") {
  ParamStore store;
  Rng rng(3);
  Tensor x = store.create("x", {4}, rng);

  const auto constant = [&]() { return Tensor::scalar(2.5); };
  CHECK(grad_check(constant, store).max_rel_error == 0.0);

  const auto linear = [&]() { return sum(scale(x, 3.0)); };
  CHECK(grad_check(linear, store).max_rel_error < 1e-9);
}

TEST_CASE("grad_check passes for every op at tolerance 1e-4") {
  ParamStore store;
  Rng rng(17);
  Tensor a = store.create("a", {3, 4}, rng, 0.8);
  Tensor b = store.create("b", {4, 2}, rng, 0.8);
  Tensor v4 = store.create("v4", {4}, rng, 0.8);
  Tensor v3 = store.create("v3", {3}, rng, 0.8);
  Tensor gain = store.create_filled("gain", {4}, 1.1);
  Tensor bias = store.create_zeros("bias", {4});
  Tensor table = store.create("table", {5, 4}, rng, 0.8);
  Tensor w = store.create("w", {4}, rng, 0.8);
  Tensor b0 = store.create_zeros("b0", {1});
  Tensor sq = store.create("sq", {2, 4}, rng, 0.8);
  Tensor v2 = store.create("v2", {2}, rng, 0.8);

  struct Case {
    const char* name;
    std::function<Tensor()> f;
  };
  const std::vector<Case> cases = {
      {"add/mul/sub/neg", [&]() { return sum(mul(add(a, a), sub(a, neg(a)))); }},
      {"matmul", [&]() { return sum(mul(matmul(a, b), matmul(a, b))); }},
      {"transpose", [&]() { return sum(mul(transpose(a), transpose(a))); }},
      {"sigmoid", [&]() { return sum(sigmoid(a)); }},
      {"tanh", [&]() { return sum(tanh_op(a)); }},
      {"gelu", [&]() { return sum(gelu(a)); }},
      {"softmax", [&]() { return sum(mul(softmax(a), a)); }},
      {"log_softmax", [&]() { return sum(mul(log_softmax(a), a)); }},
      {"layer_norm", [&]() { return sum(mul(layer_norm(a, gain, bias), a)); }},
      {"add_rowvec", [&]() { return sum(sigmoid(add_rowvec(a, v4))); }},
      {"mul_rowvec", [&]() { return sum(tanh_op(mul_rowvec(a, v4))); }},
      {"mul_colvec", [&]() { return sum(tanh_op(mul_colvec(a, v3))); }},
      {"slice/concat", [&]() {
         return sum(mul(concat_cols({slice_cols(a, 0, 2), slice_cols(a, 2, 2)}), a));
       }},
      {"embed", [&]() { return sum(tanh_op(embed(table, {0, 2, 4, 2}))); }},
      {"maxpool_rows", [&]() { return sum(mul(maxpool_rows(a), v4)); }},
      {"mean_rows", [&]() { return sum(mul(mean_rows(a), v4)); }},
      {"stack_rows", [&]() { return sum(mul(stack_rows({v4, v4}), stack_rows({v4, v4}))); }},
      {"pick", [&]() { return pick(mul(v4, v4), 2); }},
      {"squared_euclidean", [&]() { return squared_euclidean(v4, mul(v4, v4)); }},
      {"sq_dist_rows", [&]() { return sum(mul(sq_dist_rows(v4, sq), sq_dist_rows(v4, sq))); }},
      {"affine", [&]() { return sum(tanh_op(affine(b, v2, v4))); }},
      {"affine_rows", [&]() { return sum(sigmoid(affine_rows(a, w, b0))); }},
      {"mean", [&]() { return mean(mul(a, a)); }},
      {"composition", [&]() {
         const Tensor h = layer_norm(add_rowvec(matmul(a, b), Tensor::from({2}, {0.1, -0.2})),
                                     Tensor::from({2}, {1.0, 1.0}), Tensor::from({2}, {0.0, 0.0}));
         const Tensor s = softmax(mul_rowvec(h, Tensor::from({2}, {0.5, 1.5})));
         return sum(mul(matmul(transpose(s), h), matmul(transpose(s), h)));
       }},
  };
  for (const auto& c : cases) {
    INFO(c.name);
    const GradCheckResult r = grad_check(c.f, store, 1e-5);
    INFO("worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic
                  << " numeric " << r.numeric);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("affine matches hand arithmetic") {
  // W = [[1,2],[3,4]], x = (1,1), b = (0.5, -0.5) -> (3.5, 6.5)
  const Tensor w = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor x = Tensor::from({2}, {1, 1});
  const Tensor b = Tensor::from({2}, {0.5, -0.5});
  const Tensor y = affine(w, x, b);
  CHECK(y.at(0) == Approx(3.5));
  CHECK(y.at(1) == Approx(6.5));
}

TEST_CASE("matmul matches hand arithmetic") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  const Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == Approx(58));
  CHECK(c.at(0, 1) == Approx(64));
  CHECK(c.at(1, 0) == Approx(139));
  CHECK(c.at(1, 1) == Approx(154));
}

// ---------------------------------------------------------------------------
// Adam

TEST_CASE("adam with zero gradient and zero decay leaves parameters unchanged") {
  ParamStore store;
  Rng rng(9);
  Tensor x = store.create("x", {4}, rng);
  const std::vector<double> before = x.values();
  Adam opt(AdamConfig{0.01, 0.0});
  store.zero_grad();
  opt.step(store);
  CHECK(x.values() == before);
}

TEST_CASE("one adam step from zero state moves against the gradient sign") {
  ParamStore store;
  Tensor x = store.create_zeros("x", {3});
  x.mutable_grad() = {1.0, -2.0, 0.5};
  Adam opt(AdamConfig{0.01, 0.0});
  opt.step(store);
  CHECK(x.values()[0] < 0.0);
  CHECK(x.values()[1] > 0.0);
  CHECK(x.values()[2] < 0.0);
}

TEST_CASE("adam is bitwise deterministic") {
  const auto run = [] {
    ParamStore store;
    Rng rng(4);
    Tensor x = store.create("x", {6}, rng);
    Adam opt(AdamConfig{0.005, 1e-4});
    for (int step = 0; step < 25; ++step) {
      store.zero_grad();
      backward(sum(mul(x, sigmoid(x))));
      opt.step(store);
    }
    return x.values();
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);  // exact, not approximate
}

TEST_CASE("decoupled weight decay shrinks parameters without gradients") {
  ParamStore store;
  Tensor x = store.create_filled("x", {2}, 1.0);
  Adam opt(AdamConfig{0.1, 0.5});
  store.zero_grad();
  opt.step(store);
  CHECK(x.values()[0] == Approx(1.0 - 0.1 * 0.5 * 1.0));
}
