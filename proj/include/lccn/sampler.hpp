#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lccn/matrix.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/rng.hpp"

namespace lccn {

// Where the annealing exponent tau is applied in the Gibbs conditional.
enum class AnnealPlacement { transition, classifier, product };

AnnealPlacement parse_anneal_placement(const std::string& name);
std::string to_string(AnnealPlacement placement);

struct SamplerConfig {
  std::int64_t warmup_steps = 0;  // batches sampled with the warm-up transition
  std::int64_t max_step = 1;      // annealing horizon
  double anneal_scale = 0.8;
  double anneal_floor = 0.5;
  bool anneal = true;  // false pins tau to 1
  AnnealPlacement placement = AnnealPlacement::transition;
};

// max(exp(-(step / max_step) * scale), floor), or 1 when annealing is off.
double anneal_coefficient(std::int64_t step, const SamplerConfig& cfg);

// Draws an index proportional to non-negative weights using one uniform.
// Throws std::runtime_error when the total mass is zero or not finite.
std::size_t draw_categorical(std::span<const double> weights, UniformSource& rng);

// z ~ prediction_k * factor_k with tau applied per `placement`.
std::size_t sample_latent(std::span<const double> prediction, std::size_t y,
                          const NoiseModel& model, double tau, UniformSource& rng,
                          AnnealPlacement placement = AnnealPlacement::transition);

// As sample_latent, but the factor for class k is warm(k, y).
std::size_t sample_latent_warmup(std::span<const double> prediction, std::size_t y,
                                 const TransitionMatrix& warm, double tau, UniformSource& rng,
                                 AnnealPlacement placement = AnnealPlacement::transition);

// Per-sample latent labels; unassigned until first drawn.
class LatentAssignment {
 public:
  static constexpr std::int32_t kUnassigned = -1;

  explicit LatentAssignment(std::size_t n) : z_(n, kUnassigned) {}

  std::size_t size() const { return z_.size(); }
  std::size_t assigned_count() const { return assigned_; }
  bool is_assigned(std::size_t n) const { return z_[n] != kUnassigned; }
  std::int32_t operator[](std::size_t n) const { return z_[n]; }
  std::span<const std::int32_t> labels() const { return z_; }

  void set(std::size_t n, std::size_t z);

  friend bool operator==(const LatentAssignment&, const LatentAssignment&) = default;

 private:
  std::vector<std::int32_t> z_;
  std::size_t assigned_ = 0;
};

// Rows: sample index, latent label (-1 when unassigned).
void write_assignment_csv(std::ostream& out, const LatentAssignment& assignment);

// Signed and absolute reallocations per latent row over one batch.
struct ReallocationTally {
  std::vector<std::int64_t> net;
  std::vector<std::int64_t> moved;
};

// One Gibbs pass over `batch`. predictions(i, :) belongs to batch[i]. While
// step < warmup_steps the warm transition replaces the collapsed factor.
ReallocationTally gibbs_batch(std::span<const std::size_t> batch, const Matrix& predictions,
                              std::span<const std::uint16_t> noisy_labels,
                              LatentAssignment& assignment, NoiseModel& model, std::int64_t step,
                              const TransitionMatrix* warm, const SamplerConfig& cfg,
                              UniformSource& rng);

// Exact collapsed posterior over every latent assignment of a tiny dataset.
// Assignment Z is encoded little-endian in base num_latent: z_0 is the least
// significant digit.
struct ExactPosterior {
  std::size_t num_samples = 0;
  std::size_t num_latent = 0;
  std::vector<double> log_mass;     // unnormalized
  std::vector<double> probability;  // normalized

  std::size_t encode(std::span<const std::size_t> z) const;
  std::vector<std::size_t> decode(std::size_t index) const;

  // P(z_n = k | the other labels of `index`) read off the table.
  std::vector<double> conditional(std::size_t index, std::size_t n) const;
};

inline constexpr std::size_t kExactPosteriorMaxStates = 1'000'000;

ExactPosterior exact_posterior(const Matrix& predictions, std::span<const std::uint16_t> labels,
                               std::span<const double> alpha);

}  // namespace lccn
