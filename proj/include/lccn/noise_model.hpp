#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lccn {

// Row-stochastic matrix: entry (k, j) is P(observed label j | latent class k).
// In outlier mode there is one extra latent row (index num_observed).
class TransitionMatrix {
 public:
  TransitionMatrix() = default;
  TransitionMatrix(std::size_t num_latent, std::size_t num_observed, double fill = 0.0);

  static TransitionMatrix identity(std::size_t num_latent, std::size_t num_observed);
  static TransitionMatrix uniform(std::size_t num_latent, std::size_t num_observed);

  std::size_t num_latent() const { return num_latent_; }
  std::size_t num_observed() const { return num_observed_; }

  double& operator()(std::size_t k, std::size_t j) { return values_[k * num_observed_ + j]; }
  double operator()(std::size_t k, std::size_t j) const {
    return values_[k * num_observed_ + j];
  }
  std::span<const double> row(std::size_t k) const {
    return {values_.data() + k * num_observed_, num_observed_};
  }
  std::span<double> row(std::size_t k) {
    return {values_.data() + k * num_observed_, num_observed_};
  }
  std::span<const double> values() const { return values_; }

  // Max over rows of |sum - 1|, and whether every entry lies in [0, 1].
  double max_row_sum_error() const;
  bool is_stochastic(double tolerance = 1e-9) const;

  friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

 private:
  std::size_t num_latent_ = 0;
  std::size_t num_observed_ = 0;
  std::vector<double> values_;
};

// One row per latent class, comma-separated, 17 significant digits.
void write_transition_csv(std::ostream& out, const TransitionMatrix& phi);
void write_transition_csv(const std::string& path, const TransitionMatrix& phi);
TransitionMatrix read_transition_csv(const std::string& path);

// Dirichlet-multinomial noise model. Counts N(k, j) record how many assigned
// samples currently have latent class k and observed label j; the prior alpha
// is shared by every latent row.
class NoiseModel {
 public:
  NoiseModel(std::size_t num_latent, std::size_t num_observed, std::vector<double> alpha);

  std::size_t num_latent() const { return num_latent_; }
  std::size_t num_observed() const { return num_observed_; }
  std::span<const double> alpha() const { return alpha_; }
  double alpha_sum() const { return alpha_sum_; }

  std::uint64_t count(std::size_t z, std::size_t y) const {
    return counts_[z * num_observed_ + y];
  }
  std::uint64_t row_total(std::size_t z) const { return row_totals_[z]; }
  std::uint64_t total() const { return total_; }

  void increment(std::size_t z, std::size_t y);
  // Throws std::logic_error when the cell is already zero.
  void decrement(std::size_t z, std::size_t y);

  // Unnormalized collapsed factor (alpha_y + N_{k,y}) / (sum(alpha) + N_k)
  // for every latent k. The caller removes the current sample's own count
  // first.
  std::vector<double> conditional_transition(std::size_t y) const;
  void conditional_transition(std::size_t y, std::span<double> out) const;

  // Posterior mean (N_kj + alpha_j) / (N_k + sum(alpha)).
  TransitionMatrix transition_matrix() const;

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;

 private:
  void check_indices(std::size_t z, std::size_t y) const;

  std::size_t num_latent_;
  std::size_t num_observed_;
  std::vector<double> alpha_;
  double alpha_sum_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> row_totals_;
  std::uint64_t total_ = 0;
};

// Upper bound on the L1 change of transition row i produced by one batch that
// moves |net| samples net into the row and `moved` samples in or out in total.
double safeguard_bound(const NoiseModel& model, std::size_t row, std::int64_t net,
                       std::int64_t moved);

struct AuditResult {
  std::vector<double> changes;  // per-row L1 change of the posterior mean
  std::vector<double> bounds;   // per-row safeguard bound
  bool pass = true;
};

// Compares the transition before and after a batch against the bound. The
// bound is evaluated on `before`'s counts.
AuditResult audit_update(const NoiseModel& before, const NoiseModel& after,
                         std::span<const std::int64_t> net, std::span<const std::int64_t> moved);

class SafeguardViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lccn
