// SPDX-License-Identifier: Apache-2.0
#include "freqnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace freqnet {

double gradcheck(const GradFn& f, const std::vector<Tensor>& inputs, std::uint64_t probe_seed, double h) {
  Tensor probe;
  auto objective = [&]() {
    const Tensor out = f(inputs);
    if (!probe.defined()) {
      std::mt19937_64 rng(probe_seed);
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> d(out.numel());
      for (auto& v : d) v = n(rng);
      probe = Tensor::from(out.shape(), std::move(d));
    }
    return sum(mul(out, probe));
  };

  for (Tensor t : inputs) t.zero_grad();
  objective().backward();

  double worst = 0.0;
  for (const auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    Tensor leaf = t;
    auto data = leaf.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        data[i] = keep + h;
        plus = objective().item();
        data[i] = keep - h;
        minus = objective().item();
      }
      data[i] = keep;
      const double numeric = (plus - minus) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    if (scale > 1e-12) worst = std::max(worst, std::sqrt(diff2) / scale);
  }
  return worst;
}

}  // namespace freqnet
