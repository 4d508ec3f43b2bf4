#include "doctest.h"
#include "helpers.hpp"

#include "hcinr/tensor.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace hcinr;
using testing::away_from_zero;
using testing::random_tensor;

namespace {

// sum(t * weights) with constant weights, so every output entry matters.
Tensor weighted_sum(const Tensor& t, const Tensor& weights) { return ad::sum(ad::mul(t, weights)); }

struct OpCase {
  const char* name;
  // Builds the inputs for one seed; `variable` chooses which input is differentiated.
  std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> op;
};

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<OpCase> op_cases() {
  auto two_same = [](std::mt19937_64& rng) {
    const Shape s{draw(rng, 1, 5), draw(rng, 1, 5)};
    return std::vector<Tensor>{random_tensor(rng, s), random_tensor(rng, s)};
  };
  auto one = [](std::mt19937_64& rng) {
    return std::vector<Tensor>{random_tensor(rng, {draw(rng, 1, 5), draw(rng, 1, 5)})};
  };
  return {
      {"add", two_same, [](const auto& in) { return ad::add(in[0], in[1]); }},
      {"subtract", two_same, [](const auto& in) { return ad::sub(in[0], in[1]); }},
      {"multiply", two_same, [](const auto& in) { return ad::mul(in[0], in[1]); }},
      {"matmul",
       [](std::mt19937_64& rng) {
         const std::size_t m = draw(rng, 1, 5), k = draw(rng, 1, 5), n = draw(rng, 1, 5);
         return std::vector<Tensor>{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
       },
       [](const auto& in) { return ad::matmul(in[0], in[1]); }},
      {"linear",
       [](std::mt19937_64& rng) {
         const std::size_t m = draw(rng, 1, 5), k = draw(rng, 1, 5), n = draw(rng, 1, 5);
         return std::vector<Tensor>{random_tensor(rng, {m, k}), random_tensor(rng, {k, n}),
                                    random_tensor(rng, {n})};
       },
       [](const auto& in) { return ad::linear(in[0], in[1], in[2]); }},
      {"modulate",
       [](std::mt19937_64& rng) {
         const Shape s{draw(rng, 1, 5), draw(rng, 1, 5)};
         return std::vector<Tensor>{random_tensor(rng, s), random_tensor(rng, s), random_tensor(rng, s)};
       },
       [](const auto& in) { return ad::modulate(in[0], in[1], in[2]); }},
      {"sin", one, [](const auto& in) { return ad::sin(in[0]); }},
      {"sin_frequency", one, [](const auto& in) { return ad::sin(in[0], 3.0); }},
      {"cos", one, [](const auto& in) { return ad::cos(in[0]); }},
      {"cos_frequency", one, [](const auto& in) { return ad::cos(in[0], 2.5); }},
      {"tanh", one, [](const auto& in) { return ad::tanh(in[0]); }},
      {"relu",
       [](std::mt19937_64& rng) {
         return std::vector<Tensor>{away_from_zero(rng, {draw(rng, 1, 5), draw(rng, 1, 5)}, 1e-3)};
       },
       [](const auto& in) { return ad::relu(in[0]); }},
      {"sqrt",
       [](std::mt19937_64& rng) {
         return std::vector<Tensor>{random_tensor(rng, {draw(rng, 1, 5), draw(rng, 1, 5)}, 0.2, 2.0)};
       },
       [](const auto& in) { return ad::sqrt(in[0]); }},
      {"square", one, [](const auto& in) { return ad::square(in[0]); }},
      {"sum", one, [](const auto& in) { return ad::sum(in[0]); }},
      {"mean", one, [](const auto& in) { return ad::mean(in[0]); }},
      {"add_bias",
       [](std::mt19937_64& rng) {
         const std::size_t m = draw(rng, 1, 5), n = draw(rng, 1, 5);
         return std::vector<Tensor>{random_tensor(rng, {m, n}), random_tensor(rng, {n})};
       },
       [](const auto& in) { return ad::add_bias(in[0], in[1]); }},
      {"affine", one, [](const auto& in) { return ad::affine(in[0], -1.7, 0.4); }},
      {"slice_cols",
       [](std::mt19937_64& rng) { return std::vector<Tensor>{random_tensor(rng, {draw(rng, 1, 5), 6})}; },
       [](const auto& in) { return ad::slice_cols(in[0], 2, 3); }},
      {"concat_cols", two_same,
       [](const auto& in) {
         const Tensor parts[] = {in[0], in[1], in[0]};
         return ad::concat_cols(parts);
       }},
      {"segment",
       [](std::mt19937_64& rng) { return std::vector<Tensor>{random_tensor(rng, {12})}; },
       [](const auto& in) { return ad::segment(in[0], 3, {2, 3}); }},
  };
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("forward examples") {
  CHECK(ad::sin(Tensor::vector({0.0})).item() == 0.0);

  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor m = Tensor::matrix(2, 2, {3, 4, 5, 6});
  CHECK(ad::matmul(eye, m).to_vector() == m.to_vector());

  const Tensor v = Tensor::vector({1, 2, 3});
  CHECK(ad::mean(ad::square(ad::sub(v, v))).item() == 0.0);
}

TEST_CASE("backward examples") {
  {
    Tape tape;
    const Tensor x = tape.watch(Tensor::vector({1, -2, 3}));
    const Gradients g = tape.backward(ad::sum(ad::square(x)));
    CHECK(g.of(x).to_vector() == std::vector<double>{2, -4, 6});
  }
  {
    Tape tape;
    const Tensor x = tape.watch(Tensor::vector({0.0}));
    CHECK(tape.backward(ad::sum(ad::sin(x))).of(x).item() == 1.0);
  }
  {
    // The output's own gradient is 1.
    Tape tape;
    const Tensor x = tape.watch(Tensor::scalar(2.0));
    const Tensor y = ad::square(x);
    CHECK(tape.backward(y).of(y).item() == 1.0);
  }
}

TEST_CASE("mse of an affine map: gradient w.r.t. W against central differences") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor(rng, {3, 3});
  const Tensor b = random_tensor(rng, {3});
  const Tensor y = random_tensor(rng, {3, 3});
  const Tensor w = random_tensor(rng, {3, 3});
  const double err = finite_diff_check(
      [&](const Tensor& wv) { return ad::mse(ad::add_bias(ad::matmul(x, wv), b), y); }, w, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("finite_diff_check on scalar functions") {
  CHECK(finite_diff_check([](const Tensor& x) { return ad::sum(ad::square(x)); }, Tensor::vector({3.0}), 1e-5) <
        1e-8);
  CHECK(finite_diff_check([](const Tensor& x) { return ad::sum(ad::sin(x)); }, Tensor::vector({1.0}), 1e-5) < 1e-8);
  CHECK_THROWS(finite_diff_check([](const Tensor& x) { return ad::sum(x); }, Tensor::vector({1.0}), 0.0));
  CHECK_THROWS_AS(
      finite_diff_check([](const Tensor& x) { return ad::sum(ad::sqrt(x)); }, Tensor::vector({-1.0}), 1e-5),
      NonFiniteError);
}

TEST_CASE("backward errors") {
  Tape tape;
  const Tensor x = tape.watch(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(ad::square(x)), AutodiffError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), AutodiffError);
  Tape other;
  const Tensor y = other.watch(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.backward(ad::square(y)), AutodiffError);
}

TEST_CASE("shape errors name the op and both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({3, 2});
  try {
    ad::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
  CHECK_THROWS_AS(ad::add_bias(a, Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(ad::linear(a, b, Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(ad::slice_cols(a, 2, 2), ShapeError);
}

TEST_CASE("every op matches central differences over 100 seeds") {
  for (const OpCase& c : op_cases()) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed * 7919 + 13);
      const std::vector<Tensor> inputs = c.inputs(rng);
      const Tensor probe = c.op(inputs);
      const Tensor weights = random_tensor(rng, probe.shape());
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto f = [&](const Tensor& v) {
          std::vector<Tensor> in = inputs;
          in[k] = v;
          return weighted_sum(c.op(in), weights);
        };
        worst = std::max(worst, finite_diff_check(f, inputs[k], 1e-5));
      }
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("backward is linear in the output") {
  std::mt19937_64 rng(3);
  const Tensor x0 = random_tensor(rng, {4, 3});
  const Tensor w = random_tensor(rng, {3, 2});
  auto f = [&](const Tensor& x) { return ad::sum(ad::sin(ad::matmul(x, w))); };
  auto g = [&](const Tensor& x) { return ad::sum(ad::square(ad::tanh(x))); };
  const double a = 0.7, b = -2.3;

  Tape tape;
  const Tensor x = tape.watch(x0);
  const auto gf = tape.backward(f(x)).of(x).to_vector();
  const auto gg = tape.backward(g(x)).of(x).to_vector();
  const auto gc = tape.backward(ad::add(ad::scale(f(x), a), ad::scale(g(x), b))).of(x).to_vector();
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-12);
}

TEST_CASE("re-running a tape is bitwise reproducible") {
  std::mt19937_64 rng(5);
  const Tensor x0 = random_tensor(rng, {8, 4});
  const Tensor w = random_tensor(rng, {4, 4});
  auto run = [&] {
    Tape tape;
    const Tensor x = tape.watch(x0);
    const Tensor y = ad::mean(ad::square(ad::sin(ad::linear(x, w, Tensor::zeros({4})))));
    return std::make_pair(y.item(), tape.backward(y).of(x).to_vector());
  };
  const auto first = run();
  const auto second = run();
  CHECK(first.first == second.first);
  CHECK(first.second == second.second);
}

TEST_CASE("gradients of reachable nodes have their node's shape") {
  Tape tape;
  const Tensor x = tape.watch(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Tensor h = ad::tanh(ad::scale(x, 0.1));
  const Tensor s = ad::slice_cols(h, 1, 2);
  const Tensor y = ad::sum(ad::square(s));
  const Gradients g = tape.backward(y);
  CHECK(g.reached(x));
  CHECK(g.of(x).shape() == x.shape());
  CHECK(g.of(h).shape() == h.shape());
  CHECK(g.of(s).shape() == s.shape());
  // Column 0 of x is not reachable through the slice.
  CHECK(g.of(x).at(0, 0) == 0.0);
  CHECK(g.of(x).at(1, 0) == 0.0);
}

TEST_CASE("constants are not recorded") {
  Tape tape;
  const std::size_t before = tape.size();
  const Tensor c = ad::add(Tensor::scalar(1.0), Tensor::scalar(2.0));
  CHECK(tape.size() == before);
  CHECK_FALSE(c.on_tape());
}

}  // TEST_SUITE
