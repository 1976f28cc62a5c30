#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "lccn/baselines.hpp"
#include "lccn/metrics.hpp"

using namespace lccn;
using namespace lccn::testing;

namespace {

bool same_parameters(const Classifier& a, const Classifier& b) {
  return std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin(),
                    b.parameters().end());
}

}  // namespace

TEST_CASE("CE on clean and noisy data") {
  const auto clean = make_scenario(pairwise_spec(2, 3000, 0.0), 1);
  const auto cfg = quick_baseline(BaselineMethod::ce, 10);
  const auto a = train_ce(clean.train, &clean.test, cfg, 3);
  const auto b = train_ce(with_true_labels(clean.train), &clean.test, cfg, 3);
  CHECK(a.test_accuracy_per_epoch == b.test_accuracy_per_epoch);

  const auto noisy = make_scenario(pairwise_spec(2, 3000, 0.3), 1);
  const auto n = train_ce(noisy.train, &noisy.test, cfg, 3);
  const auto c = train_ce(with_true_labels(noisy.train), &noisy.test, cfg, 3);
  CHECK(n.test_accuracy_per_epoch.back() <= c.test_accuracy_per_epoch.back() - 0.03);
}

TEST_CASE("bootstrap with beta 1 reproduces CE") {
  const auto s = make_scenario(pairwise_spec(3, 500, 0.3), 2);
  auto cfg = quick_baseline(BaselineMethod::bootstrap_hard, 4);
  cfg.beta = 1.0;
  const auto boot = train_bootstrap_hard(s.train, &s.test, cfg, 5);
  const auto ce = train_ce(s.train, &s.test, quick_baseline(BaselineMethod::ce, 4), 5);
  CHECK(same_parameters(*boot.classifier, *ce.classifier));
  CHECK(boot.report.records == ce.report.records);

  cfg.beta = 1.5;
  CHECK_THROWS_AS(train_bootstrap_hard(s.train, &s.test, cfg, 5), std::invalid_argument);
}

TEST_CASE("bootstrap with beta 0 self-confirms on clean separable data") {
  auto spec = pairwise_spec(2, 1000, 0.0);
  spec.separation = 10.0;
  const auto s = make_scenario(spec, 3);
  auto cfg = quick_baseline(BaselineMethod::bootstrap_hard, 5);
  cfg.beta = 0.0;
  const auto r = train_bootstrap_hard(s.train, &s.test, cfg, 1);
  for (double a : r.test_accuracy_per_epoch) CHECK(a >= 0.99);
}

TEST_CASE("forward with the identity reproduces CE") {
  const auto s = make_scenario(pairwise_spec(3, 500, 0.3), 4);
  const auto fwd = train_forward(s.train, &s.test, TransitionMatrix::identity(3, 3),
                                 quick_baseline(BaselineMethod::forward, 4), 6);
  const auto ce = train_ce(s.train, &s.test, quick_baseline(BaselineMethod::ce, 4), 6);
  CHECK(same_parameters(*fwd.classifier, *ce.classifier));
  CHECK(fwd.test_accuracy_per_epoch == ce.test_accuracy_per_epoch);
  const auto fe = fwd.report.of_type("epoch");
  const auto ce_epochs = ce.report.of_type("epoch");
  REQUIRE(fe.size() == ce_epochs.size());
  for (std::size_t i = 0; i < fe.size(); ++i) CHECK(fe[i]->train_loss == ce_epochs[i]->train_loss);

  TransitionMatrix bad(3, 3, 0.5);
  CHECK_THROWS_AS(train_forward(s.train, &s.test, bad, quick_baseline(BaselineMethod::forward, 1), 6),
                  std::invalid_argument);
}

TEST_CASE("forward with the true transition beats CE") {
  auto spec = pairwise_spec(4, 3000, 0.3);
  const auto s = make_scenario(spec, 5);
  const auto fwd = train_forward(s.train, &s.test, true_transition(s.train),
                                 quick_baseline(BaselineMethod::forward, 15), 2);
  const auto ce = train_ce(s.train, &s.test, quick_baseline(BaselineMethod::ce, 15), 2);
  CHECK(fwd.test_accuracy_per_epoch.back() >= ce.test_accuracy_per_epoch.back() + 0.02);
}

TEST_CASE("frozen S-adaptation reduces to forward with the warm-up transition") {
  const auto s = make_scenario(pairwise_spec(2, 800, 0.3), 6);
  auto cfg = quick_baseline(BaselineMethod::s_adaptation, 4);
  cfg.transition_lr_scale = 0.0;
  const auto sa = train_s_adaptation(s.train, &s.test, cfg, 7);

  auto fcfg = quick_baseline(BaselineMethod::forward, 4);
  fcfg.forward_source = ForwardSource::estimated;
  const auto fwd = run_baseline(fcfg, s.train, &s.test, 7);
  REQUIRE(sa.transition.has_value());
  REQUIRE(fwd.transition.has_value());
  // softmax(log phi') recovers phi' up to rounding.
  CHECK(max_abs_diff(sa.transition->values(), fwd.transition->values()) <= 1e-12);
  CHECK(max_abs_diff(sa.classifier->parameters(), fwd.classifier->parameters()) <= 1e-9);
  for (const auto& u : sa.updates) CHECK(u.max_change() == 0.0);
}

TEST_CASE("S-adaptation gradient check over 20 seeds") {
  const double xi = 1e-20;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t k = 2 + rng.below(3);
    const std::size_t latent = k;
    const std::size_t rows = 6;
    Matrix probs(rows, latent);
    std::vector<std::size_t> labels(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> logits(latent);
      for (double& v : logits) v = rng.normal();
      softmax_inplace(logits);
      std::copy(logits.begin(), logits.end(), probs.row(r).begin());
      labels[r] = rng.below(k);
    }
    std::vector<double> w(latent * k);
    for (double& v : w) v = rng.normal();
    std::vector<double> grad(w.size(), 0.0);
    s_adaptation_loss(probs, labels, w, k, xi, grad);

    const double h = 1e-6;
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = s_adaptation_loss(probs, labels, w, k, xi, {});
      w[i] = saved - h;
      const double down = s_adaptation_loss(probs, labels, w, k, xi, {});
      w[i] = saved;
      const double numeric = (up - down) / (2 * h);
      diff += (numeric - grad[i]) * (numeric - grad[i]);
      scale = std::max(scale, std::max(std::abs(numeric), std::abs(grad[i])));
    }
    CHECK(std::sqrt(diff) / scale <= 1e-4);
  }
}

TEST_CASE("transition parameterization") {
  TransitionMatrix phi(2, 3);
  phi(0, 0) = 0.7;
  phi(0, 1) = 0.2;
  phi(0, 2) = 0.1;
  phi(1, 0) = 0.0;
  phi(1, 1) = 0.5;
  phi(1, 2) = 0.5;
  const auto w = transition_logits(phi, 1e-20);
  CHECK(w[3] == doctest::Approx(std::log(1e-20)));
  const auto back = softmax_rows(w, 2, 3);
  CHECK(max_abs_diff(back.values(), phi.values()) <= 1e-15);
}

TEST_CASE("S-adaptation moves more than LCCN per batch") {
  const auto s = make_scenario(pairwise_spec(2, 2000, 0.5), 8);
  auto cfg = quick_baseline(BaselineMethod::s_adaptation, 3);
  const auto sa = train_s_adaptation(s.train, &s.test, cfg, 1);
  REQUIRE_FALSE(sa.updates.empty());
  double sa_max = 0.0;
  for (const auto& u : sa.updates) sa_max = std::max(sa_max, u.max_change());
  CHECK(sa_max > 0.0);
  std::ostringstream trace;
  write_transition_trace_csv(trace, sa.updates);
  CHECK(trace.str().rfind("step,row,l1_change\n", 0) == 0);
}

TEST_CASE("method names") {
  for (auto m : {BaselineMethod::ce, BaselineMethod::bootstrap_hard, BaselineMethod::forward,
                 BaselineMethod::s_adaptation}) {
    CHECK(parse_baseline_method(to_string(m)) == m);
  }
  CHECK(parse_forward_source("true") == ForwardSource::truth);
  CHECK_THROWS(parse_baseline_method("coteaching"));
}
