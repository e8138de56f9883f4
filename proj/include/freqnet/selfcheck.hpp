// SPDX-License-Identifier: Apache-2.0
//
// Numerical self-tests shared by the CLI `selfcheck` command and the
// acceptance suite.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "freqnet/model.hpp"

namespace freqnet {

struct GradientCase {
  std::string name;
  /// Builds a random micro-problem from the seed and returns the gradcheck error.
  std::function<double(std::uint64_t)> run;
};

/// conv2d, depthwise_conv2d, deformable_conv2d, leaky_relu, the three residual
/// blocks and freq_loss.
std::vector<GradientCase> gradient_cases();

struct DctCheck {
  double max_roundtrip_error = 0.0;
  double max_parseval_error = 0.0;  // relative
};
DctCheck dct_roundtrip_check(int blocks, std::uint64_t seed);

/// Random RGB images through luma -> maps -> own-block fill -> iDCT -> RGB;
/// returns the largest absolute 8-bit level difference from the source.
double codec_roundtrip_check(int images, std::uint64_t seed);

/// Max |deformable(x, zero offsets) - conv(x)| over random problems.
double deformable_degeneracy_check(std::uint64_t seed);

/// Max |model - RB-only twin| for a random micro-model whose offset branches are zero.
double model_twin_check(std::uint64_t seed);

/// Max |omp - serial| over random conv problems of every kernel family.
double backend_agreement_check(std::uint64_t seed);

/// Gaussian weights for every parameter (no zero-init), for tests.
void randomize_params(ModelParams& params, std::uint64_t seed, double stddev);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Runs everything above with modest sizes; prints one line per check.
std::vector<CheckResult> run_selfcheck(int gradient_seeds, std::ostream& os);

}  // namespace freqnet
