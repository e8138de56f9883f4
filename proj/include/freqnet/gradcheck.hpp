// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "freqnet/tensor.hpp"

namespace freqnet {

using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares the analytic gradient of sum(f(inputs) * probe), probe a fixed
/// random tensor, against central differences for every input that requires
/// grad. Returns the largest norm-wise relative error
/// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|) over inputs.
double gradcheck(const GradFn& f, const std::vector<Tensor>& inputs, std::uint64_t probe_seed,
                 double h = 1e-6);

}  // namespace freqnet
