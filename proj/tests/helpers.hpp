#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "lccn/baselines.hpp"
#include "lccn/dataset.hpp"
#include "lccn/rng.hpp"
#include "lccn/trainer.hpp"

namespace lccn::testing {

// Replays a fixed list of uniforms; running dry is a test bug.
class ScriptedUniform final : public UniformSource {
 public:
  explicit ScriptedUniform(std::vector<double> values) : values_(values.begin(), values.end()) {}
  double uniform() override {
    if (values_.empty()) throw std::logic_error("scripted stream exhausted");
    const double u = values_.front();
    values_.pop_front();
    return u;
  }
  std::size_t remaining() const { return values_.size(); }

 private:
  std::deque<double> values_;
};

inline HarnessConfig quick_harness(std::size_t epochs, std::size_t pretrain = 5) {
  HarnessConfig h;
  h.epochs = epochs;
  h.pretrain_epochs = pretrain;
  h.train.schedule = LearningRateSchedule::parse("0:0.1");
  return h;
}

inline TrainerConfig quick_trainer(std::size_t epochs, Mode mode = Mode::lccn) {
  TrainerConfig cfg;
  cfg.mode = mode;
  cfg.harness = quick_harness(epochs);
  cfg.sampler.anneal = false;
  return cfg;
}

inline BaselineConfig quick_baseline(BaselineMethod method, std::size_t epochs) {
  BaselineConfig cfg;
  cfg.method = method;
  cfg.harness = quick_harness(epochs);
  return cfg;
}

inline ScenarioSpec pairwise_spec(std::size_t k, std::size_t n_per_class, double rate) {
  ScenarioSpec spec;
  spec.num_classes = k;
  spec.n_per_class = n_per_class;
  spec.test_per_class = n_per_class / 2;
  spec.noise.kind = rate > 0.0 ? NoiseKind::pairwise : NoiseKind::none;
  spec.noise.rate = rate;
  return spec;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace lccn::testing
