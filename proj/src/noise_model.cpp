#include "lccn/noise_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace lccn {

TransitionMatrix::TransitionMatrix(std::size_t num_latent, std::size_t num_observed, double fill)
    : num_latent_(num_latent),
      num_observed_(num_observed),
      values_(num_latent * num_observed, fill) {}

TransitionMatrix TransitionMatrix::identity(std::size_t num_latent, std::size_t num_observed) {
  TransitionMatrix phi(num_latent, num_observed);
  for (std::size_t k = 0; k < num_latent; ++k) {
    if (k < num_observed) {
      phi(k, k) = 1.0;
    } else {
      // outlier row has no natural diagonal
      for (std::size_t j = 0; j < num_observed; ++j) phi(k, j) = 1.0 / num_observed;
    }
  }
  return phi;
}

TransitionMatrix TransitionMatrix::uniform(std::size_t num_latent, std::size_t num_observed) {
  return TransitionMatrix(num_latent, num_observed, 1.0 / static_cast<double>(num_observed));
}

double TransitionMatrix::max_row_sum_error() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < num_latent_; ++k) {
    const auto r = row(k);
    worst = std::max(worst, std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0));
  }
  return worst;
}

bool TransitionMatrix::is_stochastic(double tolerance) const {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
  }
  return num_latent_ > 0 && max_row_sum_error() <= tolerance;
}

void write_transition_csv(std::ostream& out, const TransitionMatrix& phi) {
  char buf[64];
  for (std::size_t k = 0; k < phi.num_latent(); ++k) {
    for (std::size_t j = 0; j < phi.num_observed(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", phi(k, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

void write_transition_csv(const std::string& path, const TransitionMatrix& phi) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_transition_csv(out, phi);
}

TransitionMatrix read_transition_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open transition file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error("malformed transition entry '" + cell + "' in " + path);
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("ragged transition matrix in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty transition file " + path);
  TransitionMatrix phi(rows.size(), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t j = 0; j < rows[k].size(); ++j) phi(k, j) = rows[k][j];
  }
  if (!phi.is_stochastic(1e-6)) {
    throw std::runtime_error("transition matrix in " + path + " is not row-stochastic");
  }
  return phi;
}

NoiseModel::NoiseModel(std::size_t num_latent, std::size_t num_observed, std::vector<double> alpha)
    : num_latent_(num_latent), num_observed_(num_observed), alpha_(std::move(alpha)) {
  if (num_observed_ < 2) throw std::invalid_argument("noise model needs at least 2 observed classes");
  if (num_latent_ != num_observed_ && num_latent_ != num_observed_ + 1) {
    throw std::invalid_argument("latent class count must be K or K+1");
  }
  if (alpha_.size() != num_observed_) {
    throw std::invalid_argument("alpha length must equal the number of observed classes");
  }
  for (double a : alpha_) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("alpha entries must be positive and finite");
    }
  }
  alpha_sum_ = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
  counts_.assign(num_latent_ * num_observed_, 0);
  row_totals_.assign(num_latent_, 0);
}

void NoiseModel::check_indices(std::size_t z, std::size_t y) const {
  if (z >= num_latent_ || y >= num_observed_) {
    throw std::out_of_range("noise model index out of range");
  }
}

void NoiseModel::increment(std::size_t z, std::size_t y) {
  check_indices(z, y);
  ++counts_[z * num_observed_ + y];
  ++row_totals_[z];
  ++total_;
}

void NoiseModel::decrement(std::size_t z, std::size_t y) {
  check_indices(z, y);
  auto& cell = counts_[z * num_observed_ + y];
  if (cell == 0) throw std::logic_error("decrement of an empty confusion cell");
  --cell;
  --row_totals_[z];
  --total_;
}

void NoiseModel::conditional_transition(std::size_t y, std::span<double> out) const {
  if (y >= num_observed_) throw std::out_of_range("observed label out of range");
  if (out.size() != num_latent_) throw std::invalid_argument("output span has wrong length");
  for (std::size_t k = 0; k < num_latent_; ++k) {
    out[k] = (alpha_[y] + static_cast<double>(counts_[k * num_observed_ + y])) /
             (alpha_sum_ + static_cast<double>(row_totals_[k]));
  }
}

std::vector<double> NoiseModel::conditional_transition(std::size_t y) const {
  std::vector<double> out(num_latent_);
  conditional_transition(y, out);
  return out;
}

TransitionMatrix NoiseModel::transition_matrix() const {
  TransitionMatrix phi(num_latent_, num_observed_);
  for (std::size_t k = 0; k < num_latent_; ++k) {
    const double denom = alpha_sum_ + static_cast<double>(row_totals_[k]);
    for (std::size_t j = 0; j < num_observed_; ++j) {
      phi(k, j) = (static_cast<double>(counts_[k * num_observed_ + j]) + alpha_[j]) / denom;
    }
  }
  return phi;
}

double safeguard_bound(const NoiseModel& model, std::size_t row, std::int64_t net,
                       std::int64_t moved) {
  if (row >= model.num_latent()) throw std::out_of_range("safeguard row out of range");
  if (moved < 0 || moved < std::abs(net)) {
    throw std::invalid_argument("moved count must be at least |net|");
  }
  const double base = static_cast<double>(model.row_total(row)) + model.alpha_sum();
  const double r = static_cast<double>(net) / base;
  const double r_hat = static_cast<double>(moved) / base;
  if (!(1.0 + r > 0.0)) throw std::invalid_argument("row would become empty below its prior");
  return (std::abs(r) + r_hat) / (1.0 + r);
}

AuditResult audit_update(const NoiseModel& before, const NoiseModel& after,
                         std::span<const std::int64_t> net, std::span<const std::int64_t> moved) {
  if (before.num_latent() != after.num_latent() || before.num_observed() != after.num_observed() ||
      net.size() != before.num_latent() || moved.size() != before.num_latent()) {
    throw std::invalid_argument("audit dimension mismatch");
  }
  const auto old_phi = before.transition_matrix();
  const auto new_phi = after.transition_matrix();
  AuditResult result;
  result.changes.resize(before.num_latent());
  result.bounds.resize(before.num_latent());
  for (std::size_t i = 0; i < before.num_latent(); ++i) {
    double change = 0.0;
    for (std::size_t j = 0; j < before.num_observed(); ++j) {
      change += std::abs(new_phi(i, j) - old_phi(i, j));
    }
    result.changes[i] = change;
    result.bounds[i] = safeguard_bound(before, i, net[i], moved[i]);
    if (change > result.bounds[i] + 1e-12) result.pass = false;
  }
  return result;
}

}  // namespace lccn
