// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "freqnet/error.hpp"
#include "freqnet/gradcheck.hpp"
#include "freqnet/kernels.hpp"
#include "freqnet/selfcheck.hpp"
#include "support.hpp"

using namespace freqnet;
using namespace freqnet::test;

TEST_SUITE("tensor") {
  TEST_CASE("elementwise ops and their gradients") {
    Tensor a = Tensor::from({2}, {1.0, -2.0}, true);
    Tensor b = Tensor::from({2}, {3.0, 4.0}, true);
    // L = sum(2a*b + a) = 2*(3 - 8) + (-1) = -11
    Tensor l = sum(add(scale(mul(a, b), 2.0), a));
    CHECK(l.item() == -11.0);
    l.backward();
    CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) == std::vector<double>{7.0, 9.0});
    CHECK(std::vector<double>(b.grad().begin(), b.grad().end()) == std::vector<double>{2.0, -4.0});
  }

  TEST_CASE("leaf gradients accumulate across backward calls") {
    Tensor a = Tensor::from({1}, {3.0}, true);
    sum(mul(a, a)).backward();
    sum(mul(a, a)).backward();
    CHECK(a.grad()[0] == 12.0);
    a.zero_grad();
    CHECK(a.grad()[0] == 0.0);
  }

  TEST_CASE("shared subexpressions receive the sum of both paths") {
    Tensor a = Tensor::from({1}, {2.0}, true);
    Tensor h = mul(a, a);
    sum(add(h, scale(h, 3.0))).backward();  // 4 a^2
    CHECK(a.grad()[0] == 16.0);
  }

  TEST_CASE("no-grad guard records nothing") {
    Tensor a = Tensor::from({1}, {2.0}, true);
    {
      NoGradGuard g;
      CHECK_FALSE(grad_enabled());
      Tensor l = sum(mul(a, a));
      CHECK_FALSE(l.requires_grad());
    }
    CHECK(grad_enabled());
  }

  TEST_CASE("weighted_sum and leaky_relu values") {
    Tensor a = Tensor::from({3}, {1.0, -2.0, 0.5});
    Tensor b = Tensor::from({3}, {4.0, 1.0, -1.0});
    const Tensor xs[] = {a, b};
    const double ws[] = {0.25, 2.0};
    const Tensor s = weighted_sum(xs, ws);
    CHECK(s.data()[0] == 8.25);
    CHECK(s.data()[2] == -1.875);
    const Tensor r = leaky_relu(a, 0.2);
    CHECK(r.data()[1] == doctest::Approx(-0.4));
    CHECK(r.data()[0] == 1.0);
  }

  TEST_CASE("shape contracts") {
    Tensor a = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(add(a, Tensor::zeros({3, 2})), InvalidInput);
    CHECK_THROWS_AS(a.backward(), InvalidInput);
    CHECK_THROWS_AS(leaky_relu(a, 1.5), InvalidInput);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 5, 5}), Tensor::zeros({1, 3, 3, 3}), Tensor::zeros({1}), 1, 1),
                    InvalidInput);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 6, 6}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1}), 2, 1),
                    InvalidInput);
  }

  TEST_CASE("deep chains do not overflow the stack") {
    Tensor a = Tensor::from({1}, {1.0}, true);
    Tensor h = a;
    for (int i = 0; i < 100000; ++i) h = add(h, scale(a, 1e-6));
    sum(h).backward();
    CHECK(a.grad()[0] == doctest::Approx(1.1));
  }

  TEST_CASE("gradcheck detects a wrong gradient") {
    // An op with a deliberately wrong backward must fail the check.
    auto bad = [](const std::vector<Tensor>& v) {
      const Tensor& x = v[0];
      std::vector<double> d(x.data().begin(), x.data().end());
      for (auto& e : d) e = e * e;
      return Tensor::make_result(x.shape(), d, {x}, [](Tensor::Node& self) {
        const Tensor& p = self.parents[0];
        auto& g = p.node()->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * p.data()[i];  // should be 2x
      });
    };
    Rng rng(40);
    CHECK(gradcheck(bad, {rand_tensor(rng, {5}, true)}, 1) > 0.1);
  }

  TEST_CASE("operator gradients match central differences") {
    for (const auto& c : gradient_cases()) {
      double worst = 0.0;
      for (std::uint64_t s = 0; s < 20; ++s) worst = std::max(worst, c.run(500 + s));
      INFO(c.name);
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("gradients agree across kernel backends") {
    CHECK(backend_agreement_check(41) == 0.0);
  }

  TEST_CASE("deformable conv with zero offsets equals conv") {
    CHECK(deformable_degeneracy_check(42) <= 1e-12);
  }

  TEST_CASE("detach cuts the graph") {
    Tensor a = Tensor::from({1}, {2.0}, true);
    Tensor d = mul(a, a).detach();
    CHECK_FALSE(d.requires_grad());
    CHECK(d.item() == 4.0);
  }
}
