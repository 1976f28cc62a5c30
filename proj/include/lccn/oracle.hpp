#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lccn/matrix.hpp"
#include "lccn/rng.hpp"
#include "lccn/sampler.hpp"

namespace lccn {

// Normalized Gibbs conditional of sample n given the other labels of z,
// computed from counts.
std::vector<double> collapsed_conditional(const Matrix& predictions,
                                          std::span<const std::uint16_t> labels,
                                          std::span<const double> alpha,
                                          std::span<const std::size_t> z, std::size_t n);

struct OracleGrid {
  std::size_t min_samples = 2;
  std::size_t max_samples = 6;
  std::size_t min_classes = 2;
  std::size_t max_classes = 3;
  std::size_t seeds = 50;
  std::uint64_t root_seed = 0;
  double tolerance = 1e-9;
  // Test hook: multiplies the closed-form weight of latent class 0 so the
  // comparison must fail.
  double corrupt_factor = 1.0;
};

struct OracleCase {
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  bool pass = true;
};

struct OracleReport {
  std::vector<OracleCase> cases;
  double max_relative_error = 0.0;
  bool pass = true;
};

// Throws std::invalid_argument when an instance exceeds kExactPosteriorMaxStates.
OracleReport run_conditional_oracle(const OracleGrid& grid);

// A random tiny instance: row-normalized uniform predictions, uniform labels,
// alpha drawn from [0.5, 2].
struct TinyInstance {
  Matrix predictions;
  std::vector<std::uint16_t> labels;
  std::vector<double> alpha;
};

TinyInstance random_instance(std::size_t num_samples, std::size_t num_classes, Rng& rng);

struct MixingResult {
  double total_variation = 0.0;
  std::vector<double> empirical;  // indexed like ExactPosterior
  std::vector<double> exact;
};

// Systematic-scan collapsed Gibbs sweeps from an all-zero start; after
// `burn_in` sweeps, every sweep contributes its state to the histogram.
MixingResult gibbs_mixing(const TinyInstance& instance, std::size_t sweeps, std::size_t burn_in,
                          Rng& rng);

}  // namespace lccn
