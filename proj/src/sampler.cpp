#include "lccn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace lccn {

AnnealPlacement parse_anneal_placement(const std::string& name) {
  if (name == "transition") return AnnealPlacement::transition;
  if (name == "classifier") return AnnealPlacement::classifier;
  if (name == "product") return AnnealPlacement::product;
  throw std::invalid_argument("unknown anneal placement '" + name + "'");
}

std::string to_string(AnnealPlacement placement) {
  switch (placement) {
    case AnnealPlacement::transition: return "transition";
    case AnnealPlacement::classifier: return "classifier";
    case AnnealPlacement::product: return "product";
  }
  return "transition";
}

double anneal_coefficient(std::int64_t step, const SamplerConfig& cfg) {
  if (!cfg.anneal) return 1.0;
  if (step < 0) throw std::invalid_argument("anneal step must be non-negative");
  if (cfg.max_step <= 0) throw std::invalid_argument("max_step must be positive");
  const double ratio = static_cast<double>(step) / static_cast<double>(cfg.max_step);
  return std::max(std::exp(-ratio * cfg.anneal_scale), cfg.anneal_floor);
}

std::size_t draw_categorical(std::span<const double> weights, UniformSource& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::runtime_error("categorical draw with zero or non-finite mass");
  }
  const double u = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    cumulative += weights[k];
    last_positive = k;
    if (u < cumulative) return k;
  }
  return last_positive;  // u landed in the rounding slack at the top
}

namespace {

void fuse(std::span<const double> prediction, std::span<double> factor, double tau,
          AnnealPlacement placement) {
  for (std::size_t k = 0; k < factor.size(); ++k) {
    switch (placement) {
      case AnnealPlacement::transition:
        factor[k] = prediction[k] * (tau == 1.0 ? factor[k] : std::pow(factor[k], tau));
        break;
      case AnnealPlacement::classifier:
        factor[k] = (tau == 1.0 ? prediction[k] : std::pow(prediction[k], tau)) * factor[k];
        break;
      case AnnealPlacement::product: {
        const double joint = prediction[k] * factor[k];
        factor[k] = tau == 1.0 ? joint : std::pow(joint, tau);
        break;
      }
    }
  }
}

}  // namespace

std::size_t sample_latent(std::span<const double> prediction, std::size_t y,
                          const NoiseModel& model, double tau, UniformSource& rng,
                          AnnealPlacement placement) {
  if (prediction.size() != model.num_latent()) {
    throw std::invalid_argument("prediction length must equal the latent class count");
  }
  std::vector<double> weights(model.num_latent());
  model.conditional_transition(y, weights);
  fuse(prediction, weights, tau, placement);
  return draw_categorical(weights, rng);
}

std::size_t sample_latent_warmup(std::span<const double> prediction, std::size_t y,
                                 const TransitionMatrix& warm, double tau, UniformSource& rng,
                                 AnnealPlacement placement) {
  if (prediction.size() != warm.num_latent()) {
    throw std::invalid_argument("prediction length must equal the latent class count");
  }
  if (y >= warm.num_observed()) throw std::out_of_range("observed label out of range");
  std::vector<double> weights(warm.num_latent());
  for (std::size_t k = 0; k < weights.size(); ++k) weights[k] = warm(k, y);
  fuse(prediction, weights, tau, placement);
  return draw_categorical(weights, rng);
}

void LatentAssignment::set(std::size_t n, std::size_t z) {
  if (z_[n] == kUnassigned) ++assigned_;
  z_[n] = static_cast<std::int32_t>(z);
}

void write_assignment_csv(std::ostream& out, const LatentAssignment& assignment) {
  out << "sample,z\n";
  for (std::size_t n = 0; n < assignment.size(); ++n) out << n << ',' << assignment[n] << '\n';
}

ReallocationTally gibbs_batch(std::span<const std::size_t> batch, const Matrix& predictions,
                              std::span<const std::uint16_t> noisy_labels,
                              LatentAssignment& assignment, NoiseModel& model, std::int64_t step,
                              const TransitionMatrix* warm, const SamplerConfig& cfg,
                              UniformSource& rng) {
  if (predictions.rows() != batch.size()) {
    throw std::invalid_argument("one prediction row per batch sample required");
  }
  const bool warming = step < cfg.warmup_steps;
  if (warming && warm == nullptr) throw std::invalid_argument("warm-up transition missing");
  const double tau = anneal_coefficient(step, cfg);

  ReallocationTally tally{std::vector<std::int64_t>(model.num_latent(), 0),
                          std::vector<std::int64_t>(model.num_latent(), 0)};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t n = batch[i];
    const std::size_t y = noisy_labels[n];
    const bool had = assignment.is_assigned(n);
    const auto old_z = had ? static_cast<std::size_t>(assignment[n]) : 0;
    if (had) model.decrement(old_z, y);

    const auto prediction = predictions.row(i);
    const std::size_t new_z =
        warming ? sample_latent_warmup(prediction, y, *warm, tau, rng, cfg.placement)
                : sample_latent(prediction, y, model, tau, rng, cfg.placement);
    model.increment(new_z, y);
    assignment.set(n, new_z);

    if (!had) {
      ++tally.net[new_z];
      ++tally.moved[new_z];
    } else if (new_z != old_z) {
      --tally.net[old_z];
      ++tally.moved[old_z];
      ++tally.net[new_z];
      ++tally.moved[new_z];
    }
  }
  return tally;
}

std::size_t ExactPosterior::encode(std::span<const std::size_t> z) const {
  std::size_t index = 0;
  for (std::size_t n = z.size(); n-- > 0;) index = index * num_latent + z[n];
  return index;
}

std::vector<std::size_t> ExactPosterior::decode(std::size_t index) const {
  std::vector<std::size_t> z(num_samples);
  for (std::size_t n = 0; n < num_samples; ++n) {
    z[n] = index % num_latent;
    index /= num_latent;
  }
  return z;
}

std::vector<double> ExactPosterior::conditional(std::size_t index, std::size_t n) const {
  std::size_t stride = 1;
  for (std::size_t i = 0; i < n; ++i) stride *= num_latent;
  const std::size_t digit = (index / stride) % num_latent;
  const std::size_t base = index - digit * stride;
  std::vector<double> logs(num_latent);
  for (std::size_t k = 0; k < num_latent; ++k) logs[k] = log_mass[base + k * stride];
  const double top = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  for (double& v : logs) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : logs) v /= total;
  return logs;
}

ExactPosterior exact_posterior(const Matrix& predictions, std::span<const std::uint16_t> labels,
                               std::span<const double> alpha) {
  const std::size_t n_samples = predictions.rows();
  const std::size_t n_latent = predictions.cols();
  const std::size_t n_observed = alpha.size();
  if (labels.size() != n_samples) throw std::invalid_argument("one label per sample required");
  if (n_latent < 2 || n_samples == 0) throw std::invalid_argument("empty posterior problem");
  std::size_t states = 1;
  for (std::size_t n = 0; n < n_samples; ++n) {
    if (states > kExactPosteriorMaxStates / n_latent) {
      throw std::invalid_argument("state space too large for exact enumeration");
    }
    states *= n_latent;
  }
  for (auto y : labels) {
    if (y >= n_observed) throw std::out_of_range("label out of range");
  }

  const double alpha_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  ExactPosterior post;
  post.num_samples = n_samples;
  post.num_latent = n_latent;
  post.log_mass.resize(states);
  post.probability.resize(states);

  std::vector<std::size_t> counts(n_latent * n_observed);
  std::vector<std::size_t> rows(n_latent);
  for (std::size_t index = 0; index < states; ++index) {
    const auto z = post.decode(index);
    std::fill(counts.begin(), counts.end(), 0);
    std::fill(rows.begin(), rows.end(), 0);
    double log_mass = 0.0;
    for (std::size_t n = 0; n < n_samples; ++n) {
      log_mass += std::log(predictions(n, z[n]));
      ++counts[z[n] * n_observed + labels[n]];
      ++rows[z[n]];
    }
    for (std::size_t k = 0; k < n_latent; ++k) {
      for (std::size_t j = 0; j < n_observed; ++j) {
        log_mass += std::lgamma(alpha[j] + static_cast<double>(counts[k * n_observed + j]));
      }
      log_mass -= std::lgamma(alpha_sum + static_cast<double>(rows[k]));
    }
    post.log_mass[index] = log_mass;
  }

  const double top = *std::max_element(post.log_mass.begin(), post.log_mass.end());
  double total = 0.0;
  for (std::size_t i = 0; i < states; ++i) {
    post.probability[i] = std::exp(post.log_mass[i] - top);
    total += post.probability[i];
  }
  for (double& p : post.probability) p /= total;
  return post;
}

}  // namespace lccn
