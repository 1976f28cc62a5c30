#include "lccn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "lccn/trainer.hpp"

namespace lccn {

BaselineMethod parse_baseline_method(const std::string& name) {
  if (name == "ce") return BaselineMethod::ce;
  if (name == "bootstrap_hard" || name == "bootstrap") return BaselineMethod::bootstrap_hard;
  if (name == "forward") return BaselineMethod::forward;
  if (name == "s_adaptation") return BaselineMethod::s_adaptation;
  throw std::invalid_argument("unknown baseline method '" + name + "'");
}

std::string to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::ce: return "ce";
    case BaselineMethod::bootstrap_hard: return "bootstrap_hard";
    case BaselineMethod::forward: return "forward";
    case BaselineMethod::s_adaptation: return "s_adaptation";
  }
  return "ce";
}

ForwardSource parse_forward_source(const std::string& name) {
  if (name == "true" || name == "truth") return ForwardSource::truth;
  if (name == "estimated") return ForwardSource::estimated;
  if (name == "file") return ForwardSource::file;
  throw std::invalid_argument("unknown forward transition source '" + name + "'");
}

std::string to_string(ForwardSource source) {
  switch (source) {
    case ForwardSource::truth: return "true";
    case ForwardSource::estimated: return "estimated";
    case ForwardSource::file: return "file";
  }
  return "true";
}

nlohmann::json to_json(const BaselineConfig& cfg) {
  auto j = to_json(cfg.harness);
  j["method"] = to_string(cfg.method);
  switch (cfg.method) {
    case BaselineMethod::bootstrap_hard:
      j["beta"] = cfg.beta;
      break;
    case BaselineMethod::forward:
      j["forward_source"] = to_string(cfg.forward_source);
      if (!cfg.transition_path.empty()) j["transition"] = cfg.transition_path;
      break;
    case BaselineMethod::s_adaptation:
      j["s_adapt_warmup_steps"] = cfg.s_adapt_warmup_steps;
      j["transition_lr_scale"] = cfg.transition_lr_scale;
      break;
    case BaselineMethod::ce:
      break;
  }
  return j;
}

TransitionMatrix softmax_rows(std::span<const double> weights, std::size_t rows, std::size_t cols) {
  if (weights.size() != rows * cols) throw std::invalid_argument("transition weight shape mismatch");
  TransitionMatrix phi(rows, cols);
  for (std::size_t k = 0; k < rows; ++k) {
    auto row = phi.row(k);
    std::copy_n(weights.begin() + static_cast<std::ptrdiff_t>(k * cols), cols, row.begin());
    softmax_inplace(row);
  }
  return phi;
}

std::vector<double> transition_logits(const TransitionMatrix& phi, double xi) {
  std::vector<double> w(phi.values().size());
  const double floor = std::log(xi);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double v = phi.values()[i];
    w[i] = v > 0.0 ? std::max(std::log(v), floor) : floor;
  }
  return w;
}

namespace {

// Forward-corrected loss on one sample: q = phi^T p, clipped CE of q at y.
// Writes dL/dp and, when dphi is non-empty, accumulates scale * dL/dphi.
double forward_sample_loss(const TransitionMatrix& phi, std::span<const double> p, std::size_t y,
                           double xi, std::span<double> dp, std::vector<double>& q,
                           std::vector<double>& onehot, std::vector<double>& dq,
                           std::span<double> dphi, double scale) {
  const auto latent = phi.num_latent();
  const auto k = phi.num_observed();
  q.assign(k, 0.0);
  for (std::size_t i = 0; i < latent; ++i) {
    for (std::size_t j = 0; j < k; ++j) q[j] += phi(i, j) * p[i];
  }
  onehot.assign(k, 0.0);
  onehot[y] = 1.0;
  dq.assign(k, 0.0);
  const double loss = soft_target_loss(q, onehot, xi, dq);
  for (std::size_t i = 0; i < latent; ++i) {
    double g = 0.0;
    for (std::size_t j = 0; j < k; ++j) g += phi(i, j) * dq[j];
    dp[i] = g;
  }
  if (!dphi.empty()) {
    for (std::size_t i = 0; i < latent; ++i) {
      for (std::size_t j = 0; j < k; ++j) dphi[i * k + j] += scale * p[i] * dq[j];
    }
  }
  return loss;
}

void check_forward_transition(const TransitionMatrix& phi, std::size_t k) {
  if (phi.num_latent() != k || phi.num_observed() != k) {
    throw std::invalid_argument("forward transition must be K x K");
  }
  if (!phi.is_stochastic(1e-9)) throw std::invalid_argument("forward transition is not row-stochastic");
}


// Per-method hooks around the shared loop.
class Method {
 public:
  virtual ~Method() = default;
  virtual void prepare(const Classifier&) {}
  virtual ProbabilityLoss loss(std::span<const std::size_t> batch) = 0;
  // Called after the classifier step of each batch. Returns the batch's max
  // transition change, if the method tracks one.
  virtual std::optional<double> after_step(std::int64_t, std::size_t, double) { return {}; }
  virtual std::optional<TransitionMatrix> transition() const { return {}; }
  virtual void annotate(nlohmann::json&) const {}
};

BaselineResult drive(const Dataset& train, const Dataset* test, const BaselineConfig& cfg,
                     std::uint64_t seed, Method& method) {
  train.validate();
  if (train.num_samples == 0) throw std::invalid_argument("training set is empty");
  const Stopwatch clock(cfg.harness.record_wall_time);
  BaselineResult result;
  result.classifier = init_classifier(cfg.harness, train.num_features, train.num_classes, seed);
  auto& model = *result.classifier;
  auto shuffle = Rng::derive(seed, Stream::shuffle);
  pretrain(model, train, cfg.harness, shuffle);
  method.prepare(model);

  result.report.run_id = to_string(cfg.method) + "-seed" + std::to_string(seed);
  auto& header = result.report.header;
  header["method"] = to_string(cfg.method);
  header["seed"] = seed;
  header["config"] = to_json(cfg);
  header["data"] = {{"num_samples", train.num_samples},
                    {"num_features", train.num_features},
                    {"num_classes", train.num_classes}};
  method.annotate(header);

  const bool truth = train.has_true_labels();
  const auto truth_phi = truth ? std::optional(true_transition(train)) : std::nullopt;
  SgdMomentum opt(model.parameters().size());
  UpdateWindow window(cfg.harness.update_window);
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.harness.epochs; ++epoch) {
    const double lr = cfg.harness.train.schedule.rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double epoch_max_change = 0.0;
    for (const auto& batch :
         epoch_batches(train.num_samples, cfg.harness.train.batch_size, shuffle)) {
      const auto x = gather_features(train, batch);
      loss_sum += train_step(model, opt, x, method.loss(batch), lr, cfg.harness.train);
      if (const auto change = method.after_step(step, epoch, lr)) {
        epoch_max_change = std::max(epoch_max_change, *change);
        if (window.add(*change, 0.0)) {
          ReportRecord rec;
          rec.type = "updates";
          rec.epoch = epoch;
          rec.step = step + 1;
          rec.update_magnitudes = window.take(rec.safeguard_bound_max);
          rec.max_update_magnitude =
              *std::max_element(rec.update_magnitudes.begin(), rec.update_magnitudes.end());
          result.report.records.push_back(std::move(rec));
        }
      }
      ++batches;
      ++step;
    }
    ReportRecord rec;
    rec.type = "epoch";
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    if (test) {
      rec.test_accuracy = evaluate(model, *test);
      result.test_accuracy_per_epoch.push_back(*rec.test_accuracy);
    }
    if (const auto phi = method.transition(); phi && truth) {
      rec.transition_l1_per_row = transition_error(*phi, *truth_phi).per_row;
    }
    rec.max_update_magnitude = epoch_max_change;
    rec.wall_time_ms = clock.elapsed_ms();
    result.report.records.push_back(std::move(rec));
  }
  double bound = 0.0;
  auto rest = window.take(bound);
  if (!rest.empty()) {
    ReportRecord rec;
    rec.type = "updates";
    rec.epoch = cfg.harness.epochs - 1;
    rec.step = step;
    rec.max_update_magnitude = *std::max_element(rest.begin(), rest.end());
    rec.update_magnitudes = std::move(rest);
    result.report.records.push_back(std::move(rec));
  }
  result.transition = method.transition();
  return result;
}

class CrossEntropy final : public Method {
 public:
  CrossEntropy(const Dataset& data, double xi) : data_(data), xi_(xi) {}
  ProbabilityLoss loss(std::span<const std::size_t> batch) override {
    return [this, batch](std::size_t row, std::span<const double> p, std::span<double> dp) {
      onehot_.assign(p.size(), 0.0);
      onehot_[data_.noisy_labels[batch[row]]] = 1.0;
      return soft_target_loss(p, onehot_, xi_, dp);
    };
  }

 private:
  const Dataset& data_;
  double xi_;
  std::vector<double> onehot_;
};

class BootstrapHard final : public Method {
 public:
  BootstrapHard(const Dataset& data, double beta, double xi) : data_(data), beta_(beta), xi_(xi) {}
  ProbabilityLoss loss(std::span<const std::size_t> batch) override {
    return [this, batch](std::size_t row, std::span<const double> p, std::span<double> dp) {
      target_.assign(p.size(), 0.0);
      target_[data_.noisy_labels[batch[row]]] += beta_;
      target_[argmax(p)] += 1.0 - beta_;
      return soft_target_loss(p, target_, xi_, dp);
    };
  }
  void annotate(nlohmann::json& header) const override { header["beta"] = beta_; }

 private:
  const Dataset& data_;
  double beta_;
  double xi_;
  std::vector<double> target_;
};

class Forward final : public Method {
 public:
  Forward(const Dataset& data, TransitionMatrix phi, double xi)
      : data_(data), phi_(std::move(phi)), xi_(xi) {}
  ProbabilityLoss loss(std::span<const std::size_t> batch) override {
    return [this, batch](std::size_t row, std::span<const double> p, std::span<double> dp) {
      return forward_sample_loss(phi_, p, data_.noisy_labels[batch[row]], xi_, dp, q_, onehot_,
                                 dq_, {}, 0.0);
    };
  }
  std::optional<TransitionMatrix> transition() const override { return phi_; }

 private:
  const Dataset& data_;
  TransitionMatrix phi_;
  double xi_;
  std::vector<double> q_, onehot_, dq_;
};

class SAdaptation final : public Method {
 public:
  SAdaptation(const Dataset& data, const BaselineConfig& cfg, std::vector<BatchUpdate>& trace)
      : data_(data), cfg_(cfg), xi_(cfg.harness.train.clip_epsilon), trace_(trace) {}

  void prepare(const Classifier& model) override {
    const auto k = data_.num_classes;
    warm_ = warmup_transition(model, data_);
    weights_ = transition_logits(warm_, xi_);
    phi_ = softmax_rows(weights_, k, k);
    opt_.emplace(weights_.size());
  }

  ProbabilityLoss loss(std::span<const std::size_t> batch) override {
    dphi_.assign(weights_.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    return [this, batch, scale](std::size_t row, std::span<const double> p, std::span<double> dp) {
      return forward_sample_loss(phi_, p, data_.noisy_labels[batch[row]], xi_, dp, q_, onehot_,
                                 dq_, dphi_, scale);
    };
  }

  std::optional<double> after_step(std::int64_t step, std::size_t epoch, double lr) override {
    if (step < cfg_.s_adapt_warmup_steps) return {};
    const auto k = data_.num_classes;
    std::vector<double> grad(weights_.size());
    for (std::size_t i = 0; i < k; ++i) {
      softmax_backward(phi_.row(i), std::span<const double>(dphi_).subspan(i * k, k),
                       std::span<double>(grad).subspan(i * k, k));
    }
    for (double g : grad) {
      if (!std::isfinite(g)) throw std::runtime_error("non-finite transition gradient");
    }
    opt_->step(weights_, grad, lr * cfg_.transition_lr_scale, cfg_.harness.train.momentum,
               cfg_.harness.train.weight_decay);
    auto next = softmax_rows(weights_, k, k);
    BatchUpdate update;
    update.step = step;
    update.epoch = epoch;
    update.changes.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      double l1 = 0.0;
      for (std::size_t j = 0; j < k; ++j) l1 += std::abs(next(i, j) - phi_(i, j));
      update.changes[i] = l1;
    }
    phi_ = std::move(next);
    const double max_change = update.max_change();
    trace_.push_back(std::move(update));
    return max_change;
  }

  std::optional<TransitionMatrix> transition() const override { return phi_; }

 private:
  const Dataset& data_;
  const BaselineConfig& cfg_;
  double xi_;
  std::vector<BatchUpdate>& trace_;
  TransitionMatrix warm_;
  TransitionMatrix phi_;
  std::vector<double> weights_;
  std::vector<double> dphi_;
  std::optional<SgdMomentum> opt_;
  std::vector<double> q_, onehot_, dq_;
};

}  // namespace

double s_adaptation_loss(const Matrix& probabilities, std::span<const std::size_t> labels,
                         std::span<const double> weights, std::size_t num_observed, double xi,
                         std::span<double> grad) {
  const auto k = num_observed;
  if (probabilities.cols() != k) throw std::invalid_argument("probabilities must have K columns");
  if (labels.size() != probabilities.rows()) throw std::invalid_argument("one label per row");
  const auto phi = softmax_rows(weights, k, k);
  std::vector<double> dphi(grad.empty() ? 0 : weights.size(), 0.0);
  std::vector<double> dp(k), q, onehot, dq;
  const double scale = 1.0 / static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    total += forward_sample_loss(phi, probabilities.row(r), labels[r], xi, dp, q, onehot, dq, dphi,
                                 scale);
  }
  if (!grad.empty()) {
    if (grad.size() != weights.size()) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t i = 0; i < k; ++i) {
      softmax_backward(phi.row(i), std::span<const double>(dphi).subspan(i * k, k),
                       grad.subspan(i * k, k));
    }
  }
  return total * scale;
}

BaselineResult train_ce(const Dataset& train, const Dataset* test, const BaselineConfig& cfg,
                        std::uint64_t seed) {
  CrossEntropy method(train, cfg.harness.train.clip_epsilon);
  return drive(train, test, cfg, seed, method);
}

BaselineResult train_bootstrap_hard(const Dataset& train, const Dataset* test,
                                    const BaselineConfig& cfg, std::uint64_t seed) {
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) throw std::invalid_argument("beta must lie in [0, 1]");
  BootstrapHard method(train, cfg.beta, cfg.harness.train.clip_epsilon);
  return drive(train, test, cfg, seed, method);
}

BaselineResult train_forward(const Dataset& train, const Dataset* test,
                             const TransitionMatrix& transition, const BaselineConfig& cfg,
                             std::uint64_t seed) {
  check_forward_transition(transition, train.num_classes);
  Forward method(train, transition, cfg.harness.train.clip_epsilon);
  return drive(train, test, cfg, seed, method);
}

BaselineResult train_s_adaptation(const Dataset& train, const Dataset* test,
                                  const BaselineConfig& cfg, std::uint64_t seed) {
  if (cfg.s_adapt_warmup_steps < 0) throw std::invalid_argument("s_adapt_warmup_steps must be >= 0");
  if (!(cfg.transition_lr_scale >= 0.0)) {
    throw std::invalid_argument("transition_lr_scale must be non-negative");
  }
  std::vector<BatchUpdate> trace;
  SAdaptation method(train, cfg, trace);
  auto result = drive(train, test, cfg, seed, method);
  result.updates = std::move(trace);
  return result;
}

BaselineResult run_baseline(const BaselineConfig& cfg, const Dataset& train, const Dataset* test,
                            std::uint64_t seed) {
  switch (cfg.method) {
    case BaselineMethod::ce: return train_ce(train, test, cfg, seed);
    case BaselineMethod::bootstrap_hard: return train_bootstrap_hard(train, test, cfg, seed);
    case BaselineMethod::s_adaptation: return train_s_adaptation(train, test, cfg, seed);
    case BaselineMethod::forward: break;
  }
  TransitionMatrix phi;
  switch (cfg.forward_source) {
    case ForwardSource::truth:
      if (!train.has_true_labels()) {
        throw std::invalid_argument("forward with the true transition needs ground truth");
      }
      phi = true_transition(train);
      if (phi.num_latent() != train.num_classes) {
        throw std::invalid_argument("forward correction does not model outliers");
      }
      break;
    case ForwardSource::estimated: {
      // Same pretraining as the run itself, so the estimate matches what
      // S-adaptation starts from.
      BaselineConfig pre = cfg;
      pre.harness.epochs = 0;
      pre.method = BaselineMethod::ce;
      auto warm = train_ce(train, nullptr, pre, seed);
      phi = warmup_transition(*warm.classifier, train);
      break;
    }
    case ForwardSource::file:
      if (cfg.transition_path.empty()) throw std::invalid_argument("forward file source needs a path");
      phi = read_transition_csv(cfg.transition_path);
      break;
  }
  auto result = train_forward(train, test, phi, cfg, seed);
  result.report.header["forward_transition"] = phi.values();
  return result;
}

void write_transition_trace_csv(std::ostream& out, std::span<const BatchUpdate> trace) {
  out << "step,row,l1_change\n";
  char buf[64];
  for (const auto& u : trace) {
    for (std::size_t r = 0; r < u.changes.size(); ++r) {
      std::snprintf(buf, sizeof(buf), "%.17g", u.changes[r]);
      out << u.step << ',' << r << ',' << buf << '\n';
    }
  }
}

}  // namespace lccn
