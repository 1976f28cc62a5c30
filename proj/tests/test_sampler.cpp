#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "lccn/oracle.hpp"
#include "lccn/sampler.hpp"

using namespace lccn;
using lccn::testing::ScriptedUniform;

namespace {

NoiseModel reference_counts() {
  NoiseModel m(2, 2, {1.0, 1.0});
  for (int i = 0; i < 3; ++i) m.increment(0, 0);
  m.increment(0, 1);
  for (int i = 0; i < 4; ++i) m.increment(1, 1);
  return m;
}

double frequency_of_zero(std::span<const double> prediction, std::size_t y, const NoiseModel& m,
                         std::uint64_t seed, int draws = 100000) {
  Rng rng(seed);
  int zeros = 0;
  for (int i = 0; i < draws; ++i) zeros += sample_latent(prediction, y, m, 1.0, rng) == 0;
  return static_cast<double>(zeros) / draws;
}

}  // namespace

TEST_CASE("anneal coefficient") {
  SamplerConfig cfg;
  cfg.max_step = 1000;
  CHECK(anneal_coefficient(0, cfg) == 1.0);
  CHECK(anneal_coefficient(1000, cfg) == 0.5);
  CHECK(anneal_coefficient(500, cfg) == doctest::Approx(std::exp(-0.4)).epsilon(1e-12));
  CHECK(std::exp(-0.4) == doctest::Approx(0.6703).epsilon(1e-4));

  double previous = 1.0;
  for (std::int64_t step = 0; step <= 3000; step += 7) {
    const double tau = anneal_coefficient(step, cfg);
    CHECK(tau <= previous);
    CHECK(tau >= 0.5);
    CHECK(tau <= 1.0);
    previous = tau;
  }
  cfg.anneal = false;
  CHECK(anneal_coefficient(1000, cfg) == 1.0);
}

TEST_CASE("sample_latent") {
  const double xi = 1e-20;
  NoiseModel empty(2, 2, {1.0, 1.0});
  {
    const std::vector<double> pred = {1.0, xi};
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(sample_latent(pred, 1, empty, 1.0, rng) == 0);
  }
  const std::vector<double> half = {0.5, 0.5};
  CHECK(std::abs(frequency_of_zero(half, 0, empty, 11) - 0.5) <= 0.01);
  // P(z = 0) = (0.5 * 4/6) / (0.5 * 4/6 + 0.5 * 1/6) = 0.8
  CHECK(std::abs(frequency_of_zero(half, 0, reference_counts(), 12) - 0.8) <= 0.01);
}

TEST_CASE("sample_latent_warmup") {
  {
    const auto identity = TransitionMatrix::identity(2, 2);
    const std::vector<double> pred = {0.6, 0.4};
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) CHECK(sample_latent_warmup(pred, 1, identity, 1.0, rng) == 1);
  }
  {
    TransitionMatrix warm(2, 2);
    warm(0, 0) = 0.8;
    warm(0, 1) = 0.2;
    warm(1, 0) = 0.3;
    warm(1, 1) = 0.7;
    const std::vector<double> pred = {0.9, 0.1};
    // The boundary between the two outcomes sits at u = 0.72 / 0.75 = 0.96.
    ScriptedUniform below({0.9599});
    ScriptedUniform above({0.9601});
    CHECK(sample_latent_warmup(pred, 0, warm, 1.0, below) == 0);
    CHECK(sample_latent_warmup(pred, 0, warm, 1.0, above) == 1);
    Rng rng(6);
    int zeros = 0;
    for (int i = 0; i < 100000; ++i) zeros += sample_latent_warmup(pred, 0, warm, 1.0, rng) == 0;
    CHECK(std::abs(zeros / 1e5 - 0.96) <= 0.01);
  }
  {
    const auto uniform = TransitionMatrix::uniform(3, 3);
    const std::vector<double> pred(3, 1.0 / 3);
    Rng rng(7);
    std::vector<int> hits(3, 0);
    for (int i = 0; i < 90000; ++i) ++hits[sample_latent_warmup(pred, 2, uniform, 1.0, rng)];
    for (int h : hits) CHECK(std::abs(h / 90000.0 - 1.0 / 3) <= 0.01);
  }
}

TEST_CASE("draw_categorical rejects empty mass") {
  ScriptedUniform u({0.5});
  const std::vector<double> zeros = {0.0, 0.0};
  CHECK_THROWS_AS(draw_categorical(zeros, u), std::runtime_error);
}

TEST_CASE("gibbs_batch first batch conserves mass") {
  Rng rng(9);
  const std::size_t b = 16;
  Matrix preds(b, 3);
  std::vector<std::uint16_t> labels(b);
  std::vector<std::size_t> batch(b);
  for (std::size_t i = 0; i < b; ++i) {
    batch[i] = i;
    labels[i] = static_cast<std::uint16_t>(i % 3);
    for (std::size_t k = 0; k < 3; ++k) preds(i, k) = 1.0 / 3;
  }
  LatentAssignment z(b);
  NoiseModel model(3, 3, {1.0, 1.0, 1.0});
  SamplerConfig cfg;
  cfg.anneal = false;
  const auto tally = gibbs_batch(batch, preds, labels, z, model, 0, nullptr, cfg, rng);
  CHECK(std::accumulate(tally.net.begin(), tally.net.end(), std::int64_t{0}) == b);
  CHECK(model.total() == b);
  CHECK(z.assigned_count() == b);
}

TEST_CASE("gibbs_batch fixed point") {
  const std::size_t b = 40;
  Matrix preds(b, 2);
  std::vector<std::uint16_t> labels(b);
  std::vector<std::size_t> batch(b);
  LatentAssignment z(b);
  NoiseModel model(2, 2, {1.0, 1.0});
  for (std::size_t i = 0; i < b; ++i) {
    batch[i] = i;
    labels[i] = static_cast<std::uint16_t>(i % 2);
    preds(i, i % 2) = 1.0 - 1e-12;
    preds(i, 1 - i % 2) = 1e-12;
    z.set(i, i % 2);
    model.increment(i % 2, i % 2);
  }
  SamplerConfig cfg;
  cfg.anneal = false;
  Rng rng(10);
  const auto tally = gibbs_batch(batch, preds, labels, z, model, 5, nullptr, cfg, rng);
  CHECK(tally.moved == std::vector<std::int64_t>{0, 0});
}

TEST_CASE("gibbs_batch scripted tallies") {
  // Hand replay with alpha = (1, 1), predictions (0.5, 0.5) and (0.2, 0.8),
  // labels (0, 1):
  // batch 1: n0 unassigned, weights (0.25, 0.25), u=0.3 -> z=0;
  //          n1 factors (1/3, 1/2), weights (0.0667, 0.4), u=0.1 -> z=0.
  // batch 2: n0 removed, factors (1/3, 1/2), weights (0.1667, 0.25), u=0.9 -> z=1;
  //          n1 removed, factors (1/2, 1/3), weights (0.1, 0.2667), u=0.5 -> z=1.
  Matrix preds(2, 2);
  preds(0, 0) = 0.5;
  preds(0, 1) = 0.5;
  preds(1, 0) = 0.2;
  preds(1, 1) = 0.8;
  const std::vector<std::uint16_t> labels = {0, 1};
  const std::vector<std::size_t> batch = {0, 1};
  LatentAssignment z(2);
  NoiseModel model(2, 2, {1.0, 1.0});
  SamplerConfig cfg;
  cfg.anneal = false;
  ScriptedUniform u({0.3, 0.1, 0.9, 0.5});

  const auto first = gibbs_batch(batch, preds, labels, z, model, 0, nullptr, cfg, u);
  CHECK(first.net == std::vector<std::int64_t>{2, 0});
  CHECK(first.moved == std::vector<std::int64_t>{2, 0});
  CHECK(z[0] == 0);
  CHECK(z[1] == 0);

  const auto second = gibbs_batch(batch, preds, labels, z, model, 1, nullptr, cfg, u);
  CHECK(second.net == std::vector<std::int64_t>{-2, 2});
  CHECK(second.moved == std::vector<std::int64_t>{2, 2});
  CHECK(z[0] == 1);
  CHECK(z[1] == 1);
  CHECK(model.count(1, 0) == 1);
  CHECK(model.count(1, 1) == 1);
  CHECK(u.remaining() == 0);
}

TEST_CASE("gibbs_batch warm-up substitutes the warm transition") {
  Matrix preds(1, 2, 0.5);
  const std::vector<std::uint16_t> labels = {1};
  const std::vector<std::size_t> batch = {0};
  SamplerConfig cfg;
  cfg.warmup_steps = 3;
  cfg.anneal = false;
  const auto identity = TransitionMatrix::identity(2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    LatentAssignment z(1);
    NoiseModel model(2, 2, {1.0, 1.0});
    Rng rng(100 + trial);
    gibbs_batch(batch, preds, labels, z, model, 2, &identity, cfg, rng);
    CHECK(z[0] == 1);
  }
  LatentAssignment z(1);
  NoiseModel model(2, 2, {1.0, 1.0});
  Rng rng(1);
  CHECK_THROWS_AS(gibbs_batch(batch, preds, labels, z, model, 0, nullptr, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("gibbs trajectories are deterministic") {
  auto trajectory = [](std::uint64_t seed) {
    Rng data_rng(77);
    const auto inst = random_instance(6, 3, data_rng);
    LatentAssignment z(6);
    NoiseModel model(3, 3, inst.alpha);
    SamplerConfig cfg;
    cfg.max_step = 20;
    Rng rng(seed);
    std::vector<std::int32_t> out;
    const std::vector<std::size_t> batch = {0, 1, 2, 3, 4, 5};
    for (int step = 0; step < 20; ++step) {
      gibbs_batch(batch, inst.predictions, inst.labels, z, model, step, nullptr, cfg, rng);
      out.insert(out.end(), z.labels().begin(), z.labels().end());
    }
    return out;
  };
  CHECK(trajectory(4) == trajectory(4));
  CHECK(trajectory(4) != trajectory(5));
}

TEST_CASE("exact posterior") {
  Matrix single(1, 2, 0.5);
  const std::vector<std::uint16_t> y1 = {0};
  const std::vector<double> alpha = {1.0, 1.0};
  const auto one = exact_posterior(single, y1, alpha);
  CHECK(one.probability[0] == doctest::Approx(0.5));
  CHECK(one.probability[1] == doctest::Approx(0.5));

  Rng rng(21);
  auto inst = random_instance(2, 2, rng);
  const auto exact = exact_posterior(inst.predictions, inst.labels, inst.alpha);
  CHECK(std::accumulate(exact.probability.begin(), exact.probability.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  Rng chain(22);
  const auto mix = gibbs_mixing(inst, 100000, 1000, chain);
  CHECK(mix.total_variation <= 0.01);

  std::vector<std::size_t> z = {1, 0, 1};
  ExactPosterior codec{3, 2, {}, {}};
  CHECK(codec.decode(codec.encode(z)) == z);
  CHECK(codec.encode(z) == 5);

  Matrix huge(21, 2, 0.5);
  const std::vector<std::uint16_t> many(21, 0);
  CHECK_THROWS_AS(exact_posterior(huge, many, alpha), std::invalid_argument);
}

TEST_CASE("conditional oracle grid") {
  const auto report = run_conditional_oracle(OracleGrid{});
  CHECK(report.pass);
  CHECK(report.cases.size() == 10);
  CHECK(report.max_relative_error <= 1e-9);

  OracleGrid corrupt;
  corrupt.seeds = 3;
  corrupt.corrupt_factor = 1.5;
  const auto bad = run_conditional_oracle(corrupt);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_relative_error > 1e-3);
}

TEST_CASE("assignment CSV") {
  LatentAssignment z(3);
  z.set(1, 2);
  std::ostringstream out;
  write_assignment_csv(out, z);
  CHECK(out.str() == "sample,z\n0,-1\n1,2\n2,-1\n");
}
