#include "lccn/harness.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace lccn {

nlohmann::json to_json(const HarnessConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  j["lr_schedule"] = cfg.train.schedule.to_string();
  j["momentum"] = cfg.train.momentum;
  j["weight_decay"] = cfg.train.weight_decay;
  j["batch_size"] = cfg.train.batch_size;
  j["clip_epsilon"] = cfg.train.clip_epsilon;
  j["model"] = to_string(cfg.model.kind);
  if (cfg.model.kind == ModelKind::mlp) j["hidden"] = cfg.model.hidden;
  j["update_window"] = cfg.update_window;
  return j;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < n; begin += batch_size) {
    const auto end = std::min(n, begin + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::unique_ptr<Classifier> init_classifier(const HarnessConfig& cfg, std::size_t input_dim,
                                            std::size_t num_outputs, std::uint64_t seed) {
  auto rng = Rng::derive(seed, Stream::init);
  return make_classifier(cfg.model, input_dim, num_outputs, rng);
}

void pretrain(Classifier& model, const Dataset& data, const HarnessConfig& cfg, Rng& shuffle) {
  if (cfg.pretrain_epochs == 0) return;
  SgdMomentum opt(model.parameters().size());
  const double lr = cfg.train.schedule.initial_rate();
  std::vector<std::size_t> targets;
  for (std::size_t e = 0; e < cfg.pretrain_epochs; ++e) {
    for (const auto& batch : epoch_batches(data.num_samples, cfg.train.batch_size, shuffle)) {
      const auto x = gather_features(data, batch);
      targets.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = data.noisy_labels[batch[i]];
      train_step(model, opt, x, targets, lr, cfg.train);
    }
  }
}

double BatchUpdate::max_change() const {
  return changes.empty() ? 0.0 : *std::max_element(changes.begin(), changes.end());
}

bool UpdateWindow::add(double max_change, double bound) {
  values_.push_back(max_change);
  bound_max_ = std::max(bound_max_, bound);
  return values_.size() >= size_;
}

std::vector<double> UpdateWindow::take(double& bound_max) {
  bound_max = bound_max_;
  bound_max_ = 0.0;
  return std::exchange(values_, {});
}

}  // namespace lccn
