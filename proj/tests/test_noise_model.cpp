#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "helpers.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/sampler.hpp"

using namespace lccn;

namespace {

// counts = [[3,1],[0,4]]
NoiseModel reference_counts() {
  NoiseModel m(2, 2, {1.0, 1.0});
  for (int i = 0; i < 3; ++i) m.increment(0, 0);
  m.increment(0, 1);
  for (int i = 0; i < 4; ++i) m.increment(1, 1);
  return m;
}

// Sum over rows of the L1 change of the posterior mean.
std::vector<double> row_changes(const NoiseModel& a, const NoiseModel& b) {
  const auto pa = a.transition_matrix();
  const auto pb = b.transition_matrix();
  std::vector<double> out(pa.num_latent(), 0.0);
  for (std::size_t k = 0; k < pa.num_latent(); ++k) {
    for (std::size_t j = 0; j < pa.num_observed(); ++j) out[k] += std::abs(pa(k, j) - pb(k, j));
  }
  return out;
}

}  // namespace

TEST_CASE("noise model construction") {
  NoiseModel square(2, 2, {1.0, 1.0});
  CHECK(square.num_latent() == 2);
  CHECK(square.num_observed() == 2);
  CHECK(square.total() == 0);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 2; ++j) CHECK(square.count(k, j) == 0);

  NoiseModel outlier(3, 2, {1.0, 1.0});
  CHECK(outlier.num_latent() == 3);
  CHECK(outlier.transition_matrix().num_latent() == 3);

  CHECK_THROWS_AS(NoiseModel(2, 2, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(NoiseModel(2, 2, {1.0}), std::invalid_argument);
}

TEST_CASE("increment and decrement") {
  NoiseModel m(2, 2, {1.0, 1.0});
  m.increment(0, 1);
  CHECK(m.count(0, 1) == 1);
  CHECK(m.row_total(0) == 1);
  m.decrement(0, 1);
  CHECK(m == NoiseModel(2, 2, {1.0, 1.0}));
  CHECK_THROWS_AS(m.decrement(0, 0), std::logic_error);
  CHECK_THROWS(m.increment(2, 0));
}

TEST_CASE("conditional transition factor") {
  NoiseModel empty(2, 2, {1.0, 1.0});
  for (std::size_t y = 0; y < 2; ++y) {
    const auto f = empty.conditional_transition(y);
    CHECK(f[0] == doctest::Approx(0.5));
    CHECK(f[1] == doctest::Approx(0.5));
  }
  const auto m = reference_counts();
  const auto f0 = m.conditional_transition(0);
  CHECK(f0[0] == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
  CHECK(f0[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  const auto f1 = m.conditional_transition(1);
  CHECK(f1[0] == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  CHECK(f1[1] == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("conditional factor agrees with enumerated posterior ratio") {
  // Eight fixed samples realise counts [[3,1],[0,4]]; a ninth with y = 0 is
  // resampled. Uniform predictions leave only the count factor.
  std::vector<std::uint16_t> labels = {0, 0, 0, 1, 1, 1, 1, 1};
  std::vector<std::size_t> z = {0, 0, 0, 0, 1, 1, 1, 1};
  for (std::uint16_t y : {std::uint16_t{0}, std::uint16_t{1}}) {
    auto lab = labels;
    lab.push_back(y);
    auto zz = z;
    zz.push_back(0);
    Matrix preds(lab.size(), 2, 0.5);
    const std::vector<double> alpha = {1.0, 1.0};
    const auto exact = exact_posterior(preds, lab, alpha);
    const auto ratio = exact.conditional(exact.encode(zz), lab.size() - 1);
    const auto f = reference_counts().conditional_transition(y);
    const double total = f[0] + f[1];
    CHECK(ratio[0] == doctest::Approx(f[0] / total).epsilon(1e-12));
    CHECK(ratio[1] == doctest::Approx(f[1] / total).epsilon(1e-12));
  }
}

TEST_CASE("posterior mean transition") {
  const auto prior = NoiseModel(2, 2, {1.0, 1.0}).transition_matrix();
  CHECK(prior(0, 0) == 0.5);
  CHECK(prior(1, 1) == 0.5);
  const auto phi = reference_counts().transition_matrix();
  CHECK(phi(0, 0) == doctest::Approx(4.0 / 6.0));
  CHECK(phi(0, 1) == doctest::Approx(2.0 / 6.0));
  CHECK(phi(1, 0) == doctest::Approx(1.0 / 6.0));
  CHECK(phi(1, 1) == doctest::Approx(5.0 / 6.0));

  NoiseModel extreme(2, 2, {1.0, 1.0});
  for (int i = 0; i < 1'000'000; ++i) extreme.increment(0, 1);
  const auto e = extreme.transition_matrix();
  CHECK(e(0, 0) > 0.0);
  CHECK(e(0, 1) > 0.0);
  CHECK(e(0, 0) == doctest::Approx(1.0 / 1'000'002.0).epsilon(1e-12));
  CHECK(e(0, 1) == doctest::Approx(1'000'001.0 / 1'000'002.0).epsilon(1e-12));
}

TEST_CASE("safeguard bound values") {
  NoiseModel m(2, 2, {1.0, 1.0});
  CHECK(safeguard_bound(m, 0, 0, 0) == 0.0);

  for (int i = 0; i < 60; ++i) m.increment(0, 0);
  for (int i = 0; i < 40; ++i) m.increment(0, 1);
  const double b = safeguard_bound(m, 0, 2, 4);
  CHECK(b == doctest::Approx((2.0 / 102 + 4.0 / 102) / (1 + 2.0 / 102)).epsilon(1e-14));
  CHECK(b == doctest::Approx(6.0 / 104).epsilon(1e-14));

  // Every way to move 3 samples in and 1 out of row 0, over all label choices.
  double worst = 0.0;
  for (int in_labels = 0; in_labels < 8; ++in_labels) {
    for (int out_label = 0; out_label < 2; ++out_label) {
      if (m.count(0, static_cast<std::size_t>(out_label)) == 0) continue;
      NoiseModel after = m;
      after.decrement(0, static_cast<std::size_t>(out_label));
      for (int s = 0; s < 3; ++s) after.increment(0, static_cast<std::size_t>((in_labels >> s) & 1));
      worst = std::max(worst, row_changes(m, after)[0]);
    }
  }
  CHECK(worst > 0.0);
  CHECK(worst <= b);

  NoiseModel big(2, 2, {1.0, 1.0});
  for (int i = 0; i < 10000; ++i) big.increment(0, static_cast<std::size_t>(i % 2));
  CHECK(safeguard_bound(big, 0, 32, 32) <= 0.0065);
  CHECK(safeguard_bound(big, 0, -32, 32) <= 0.0065);
  CHECK(safeguard_bound(big, 0, -32, 32) ==
        doctest::Approx(2.0 * 32 / 10002 / (1 - 32.0 / 10002)).epsilon(1e-12));
}

TEST_CASE("audit update") {
  const auto m = reference_counts();
  const std::vector<std::int64_t> zero(2, 0);
  const auto same = audit_update(m, m, zero, zero);
  CHECK(same.pass);
  CHECK(same.changes == std::vector<double>{0.0, 0.0});

  NoiseModel before(2, 2, {1.0, 1.0});
  for (int i = 0; i < 100; ++i) before.increment(0, 0);
  NoiseModel after = before;
  after.decrement(0, 0);
  for (int i = 0; i < 3; ++i) after.increment(0, 1);
  after.increment(1, 0);
  const std::vector<std::int64_t> net = {2, 1};
  const std::vector<std::int64_t> moved = {4, 1};
  const auto honest = audit_update(before, after, net, moved);
  CHECK(honest.pass);
  CHECK(honest.changes[0] <= 6.0 / 104 + 1e-15);

  // The same reallocation reported as if nothing had moved must be caught.
  const auto understated = audit_update(before, after, zero, zero);
  CHECK_FALSE(understated.pass);
  CHECK(understated.changes[0] > understated.bounds[0]);
}

TEST_CASE("random interleavings conserve counts and keep rows stochastic") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t k = 2 + rng.below(3);
    NoiseModel m(k + 1, k, std::vector<double>(k, 0.5 + rng.uniform()));
    std::vector<std::pair<std::size_t, std::size_t>> live;
    for (int op = 0; op < 2000; ++op) {
      if (live.empty() || rng.uniform() < 0.6) {
        live.emplace_back(rng.below(k + 1), rng.below(k));
        m.increment(live.back().first, live.back().second);
      } else {
        const auto i = rng.below(live.size());
        m.decrement(live[i].first, live[i].second);
        live[i] = live.back();
        live.pop_back();
      }
      CHECK(m.total() == live.size());
    }
    const auto phi = m.transition_matrix();
    for (std::size_t r = 0; r < phi.num_latent(); ++r) {
      double sum = 0.0;
      for (double v : phi.row(r)) {
        CHECK(v > 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("transition CSV round trip") {
  const auto phi = reference_counts().transition_matrix();
  const auto path = std::filesystem::temp_directory_path() / "lccn_phi_roundtrip.csv";
  write_transition_csv(path.string(), phi);
  CHECK(read_transition_csv(path.string()) == phi);
  std::filesystem::remove(path);
}
