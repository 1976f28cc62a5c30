#include "lccn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lccn/noise_model.hpp"

namespace lccn {

std::vector<double> collapsed_conditional(const Matrix& predictions,
                                          std::span<const std::uint16_t> labels,
                                          std::span<const double> alpha,
                                          std::span<const std::size_t> z, std::size_t n) {
  NoiseModel model(predictions.cols(), alpha.size(), {alpha.begin(), alpha.end()});
  for (std::size_t m = 0; m < z.size(); ++m) {
    if (m != n) model.increment(z[m], labels[m]);
  }
  auto w = model.conditional_transition(labels[n]);
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] *= predictions(n, k);
    total += w[k];
  }
  for (double& v : w) v /= total;
  return w;
}

TinyInstance random_instance(std::size_t num_samples, std::size_t num_classes, Rng& rng) {
  TinyInstance inst{Matrix(num_samples, num_classes), {}, {}};
  for (std::size_t n = 0; n < num_samples; ++n) {
    double total = 0.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      inst.predictions(n, k) = 0.05 + rng.uniform();
      total += inst.predictions(n, k);
    }
    for (std::size_t k = 0; k < num_classes; ++k) inst.predictions(n, k) /= total;
    inst.labels.push_back(static_cast<std::uint16_t>(rng.below(num_classes)));
  }
  for (std::size_t j = 0; j < num_classes; ++j) inst.alpha.push_back(0.5 + 1.5 * rng.uniform());
  return inst;
}

OracleReport run_conditional_oracle(const OracleGrid& grid) {
  OracleReport report;
  for (std::size_t k = grid.min_classes; k <= grid.max_classes; ++k) {
    for (std::size_t n_samples = grid.min_samples; n_samples <= grid.max_samples; ++n_samples) {
      OracleCase c{n_samples, k, 0, 0.0, true};
      for (std::size_t s = 0; s < grid.seeds; ++s) {
        Rng rng(splitmix64(grid.root_seed ^ (k << 48) ^ (n_samples << 32) ^ s));
        const auto inst = random_instance(n_samples, k, rng);
        const auto exact = exact_posterior(inst.predictions, inst.labels, inst.alpha);
        for (std::size_t index = 0; index < exact.log_mass.size(); ++index) {
          const auto z = exact.decode(index);
          for (std::size_t n = 0; n < n_samples; ++n) {
            auto closed = collapsed_conditional(inst.predictions, inst.labels, inst.alpha, z, n);
            if (grid.corrupt_factor != 1.0) {
              closed[0] *= grid.corrupt_factor;
              double total = 0.0;
              for (double v : closed) total += v;
              for (double& v : closed) v /= total;
            }
            const auto enumerated = exact.conditional(index, n);
            for (std::size_t j = 0; j < k; ++j) {
              const double err = std::abs(closed[j] - enumerated[j]) /
                                 std::max(std::abs(enumerated[j]), 1e-300);
              c.max_relative_error = std::max(c.max_relative_error, err);
            }
          }
        }
        ++c.instances;
      }
      c.pass = c.max_relative_error <= grid.tolerance;
      report.max_relative_error = std::max(report.max_relative_error, c.max_relative_error);
      report.pass = report.pass && c.pass;
      report.cases.push_back(c);
    }
  }
  return report;
}

MixingResult gibbs_mixing(const TinyInstance& instance, std::size_t sweeps, std::size_t burn_in,
                          Rng& rng) {
  const auto exact = exact_posterior(instance.predictions, instance.labels, instance.alpha);
  const auto n_samples = instance.predictions.rows();
  const auto k = instance.predictions.cols();
  NoiseModel model(k, instance.alpha.size(), instance.alpha);
  std::vector<std::size_t> z(n_samples, 0);
  for (std::size_t n = 0; n < n_samples; ++n) model.increment(0, instance.labels[n]);

  MixingResult out;
  out.exact = exact.probability;
  out.empirical.assign(exact.probability.size(), 0.0);
  for (std::size_t sweep = 0; sweep < burn_in + sweeps; ++sweep) {
    for (std::size_t n = 0; n < n_samples; ++n) {
      model.decrement(z[n], instance.labels[n]);
      z[n] = sample_latent(instance.predictions.row(n), instance.labels[n], model, 1.0, rng);
      model.increment(z[n], instance.labels[n]);
    }
    if (sweep >= burn_in) out.empirical[exact.encode(z)] += 1.0;
  }
  for (double& v : out.empirical) v /= static_cast<double>(sweeps);
  for (std::size_t i = 0; i < out.exact.size(); ++i) {
    out.total_variation += std::abs(out.empirical[i] - out.exact[i]);
  }
  out.total_variation *= 0.5;
  return out;
}

}  // namespace lccn
