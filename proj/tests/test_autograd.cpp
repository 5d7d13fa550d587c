#include <cmath>

#include "doctest.h"
#include "slgan/autograd.hpp"
#include "support.hpp"

using namespace slgan;
using testing::finite_difference_check;
using testing::random_tensor;

namespace {

constexpr double kTol = 1e-6;

// Weighted sum with fixed random coefficients so every output element matters.
ag::Var probe(const ag::Var& y, std::uint64_t seed = 77) {
  Rng rng(seed);
  return ag::sum_all(ag::mul_const(y, random_tensor(rng, y.shape())));
}

// Direct convolution used as an oracle for the im2col path.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t O = w.dim(0), K = w.dim(2);
  const std::int64_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Tensor y({N, O, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t i = 0; i < Ho; ++i)
        for (std::int64_t j = 0; j < Wo; ++j) {
          double s = b[o];
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ki = 0; ki < K; ++ki)
              for (std::int64_t kj = 0; kj < K; ++kj) {
                const std::int64_t r = i * stride - pad + ki, q = j * stride - pad + kj;
                if (r < 0 || q < 0 || r >= H || q >= W) continue;
                s += w.at4(o, c, ki, kj) * x.at4(n, c, r, q);
              }
          y.at4(n, o, i, j) = s;
        }
  return y;
}

}  // namespace

TEST_SUITE("autograd") {
  TEST_CASE("conv2d forward equals direct convolution") {
    Rng rng(1);
    for (int stride : {1, 2}) {
      const Tensor x = random_tensor(rng, {2, 3, 7, 6});
      const Tensor w = random_tensor(rng, {4, 3, 3, 3});
      const Tensor b = random_tensor(rng, {4});
      const Tensor got = ag::conv2d(ag::constant(x), ag::constant(w), ag::constant(b), stride, 1).value();
      const Tensor want = conv_oracle(x, w, b, stride, 1);
      REQUIRE(got.shape() == want.shape());
      for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("conv2d gradients") {
    Rng rng(2);
    for (int stride : {1, 2}) {
      const auto r = finite_difference_check(
          [&](const std::vector<ag::Var>& v) { return probe(ag::conv2d(v[0], v[1], v[2], stride, 1)); },
          {random_tensor(rng, {2, 2, 5, 5}), random_tensor(rng, {3, 2, 3, 3}), random_tensor(rng, {3})});
      CHECK(r.max_rel_error < kTol);
    }
  }

  TEST_CASE("instance norm gradients and statistics") {
    Rng rng(3);
    const Tensor x = random_tensor(rng, {2, 3, 4, 4}, -2, 3);
    const auto r = finite_difference_check(
        [](const std::vector<ag::Var>& v) { return probe(ag::instance_norm(v[0], 1e-5)); }, {x});
    CHECK(r.max_rel_error < kTol);
    const Tensor y = ag::instance_norm(ag::constant(x), 1e-5).value();
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        const auto [m, sd] = testing::channel_stats(y, n, c);
        CHECK(std::abs(m) < 1e-12);
        CHECK(sd == doctest::Approx(1.0).epsilon(1e-4));
      }
  }

  TEST_CASE("AdaIN composite gradients") {
    Rng rng(4);
    const auto r = finite_difference_check(
        [](const std::vector<ag::Var>& v) {
          return probe(ag::channel_affine(ag::instance_norm(v[0], 1e-5), ag::add_scalar_const(v[1], 1.0), v[2]));
        },
        {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})});
    CHECK(r.max_rel_error < kTol);
  }

  TEST_CASE("elementwise, activation and reduction gradients") {
    Rng rng(5);
    const Tensor a = random_tensor(rng, {2, 3, 2, 2}), b = random_tensor(rng, {2, 3, 2, 2});
    const Tensor m = random_tensor(rng, {2, 1, 2, 2});
    using F = std::function<ag::Var(const std::vector<ag::Var>&)>;
    const std::vector<std::pair<const char*, F>> cases = {
        {"add", [](auto& v) { return probe(ag::add(v[0], v[1])); }},
        {"sub", [](auto& v) { return probe(ag::sub(v[0], v[1])); }},
        {"mul", [](auto& v) { return probe(ag::mul(v[0], v[1])); }},
        {"scale", [](auto& v) { return probe(ag::scale(v[0], -2.5)); }},
        {"leaky_relu", [](auto& v) { return probe(ag::leaky_relu(v[0], 0.2)); }},
        {"tanh", [](auto& v) { return probe(ag::tanh(v[0])); }},
        {"softplus", [](auto& v) { return probe(ag::softplus(v[0])); }},
        {"mul_const", [&](auto& v) { return probe(ag::mul_const(v[0], m)); }},
        {"add_const", [&](auto& v) { return probe(ag::add_const(v[0], m)); }},
        {"upsample2", [](auto& v) { return probe(ag::upsample2(v[0])); }},
        {"global_avg_pool", [](auto& v) { return probe(ag::global_avg_pool(v[0])); }},
        {"mean_all", [](auto& v) { return ag::mean_all(ag::mul(v[0], v[1])); }},
        {"mean_abs_diff", [](auto& v) { return ag::mean_abs_diff(v[0], v[1]); }},
        {"rms_per_sample", [](auto& v) { return ag::rms_per_sample(ag::sub(v[0], v[1])); }},
        {"weighted_sum", [](auto& v) { return ag::weighted_sum({{0.5, ag::mean_all(v[0])}, {-3.0, ag::sum_all(v[1])}}); }},
    };
    for (const auto& [name, f] : cases) {
      CAPTURE(name);
      CHECK(finite_difference_check(f, {a, b}).max_rel_error < kTol);
    }
  }

  TEST_CASE("linear, split and row selection gradients") {
    Rng rng(6);
    const auto r = finite_difference_check(
        [](const std::vector<ag::Var>& v) {
          const ag::Var y = ag::linear(v[0], v[1], v[2]);
          auto [p, q] = ag::split_cols(y);
          const ag::Var sel = ag::select_rows({p, q}, {1, 0, 1});
          return probe(sel);
        },
        {random_tensor(rng, {3, 5}), random_tensor(rng, {4, 5}), random_tensor(rng, {4})});
    CHECK(r.max_rel_error < kTol);
  }

  TEST_CASE("shared subexpressions accumulate gradients") {
    const ag::Var x = ag::leaf(Tensor({1}, {3.0}), true);
    const ag::Var y = ag::mul(x, x);
    ag::backward(ag::sum_all(ag::add(y, x)));
    CHECK(x.grad()[0] == doctest::Approx(7.0));
  }

  TEST_CASE("no-grad scope records nothing") {
    const ag::Var x = ag::leaf(Tensor({2}, {1.0, 2.0}), true);
    {
      ag::NoGradGuard guard;
      CHECK_FALSE(ag::grad_enabled());
      const ag::Var y = ag::scale(x, 2.0);
      CHECK_FALSE(y.requires_grad());
    }
    CHECK(ag::grad_enabled());
  }

  TEST_CASE("detach blocks gradient flow") {
    const ag::Var x = ag::leaf(Tensor({1}, {2.0}), true);
    ag::backward(ag::sum_all(ag::mul(x, ag::detach(x))));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
  }

  TEST_CASE("shape mismatches throw") {
    CHECK_THROWS_AS(ag::add(ag::constant(Tensor({2, 2})), ag::constant(Tensor({2, 3}))), Error);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), Error);
  }
}
