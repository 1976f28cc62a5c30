#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lccn/matrix.hpp"
#include "lccn/rng.hpp"

namespace lccn {

struct Dataset;

enum class ModelKind : std::uint16_t { linear = 1, mlp = 2 };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  std::size_t hidden = 32;  // mlp only
};

// Probabilistic classifier P(z | x) with a flat parameter vector.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_outputs() const = 0;
  virtual std::size_t hidden_dim() const { return 0; }

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // One row of logits per row of x.
  virtual Matrix logits(const Matrix& x) const = 0;

  // grad += d/dtheta sum_i <dlogits(i, :), logits(i, :)>
  virtual void backward(const Matrix& x, const Matrix& dlogits, std::span<double> grad) const = 0;

  virtual std::unique_ptr<Classifier> clone() const = 0;

  Matrix predict_batch(const Matrix& x) const;
  std::vector<double> predict(std::span<const double> x) const;
};

class LinearSoftmax final : public Classifier {
 public:
  LinearSoftmax(std::size_t input_dim, std::size_t num_outputs);

  ModelKind kind() const override { return ModelKind::linear; }
  std::size_t input_dim() const override { return input_dim_; }
  std::size_t num_outputs() const override { return num_outputs_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  Matrix logits(const Matrix& x) const override;
  void backward(const Matrix& x, const Matrix& dlogits, std::span<double> grad) const override;
  std::unique_ptr<Classifier> clone() const override {
    return std::make_unique<LinearSoftmax>(*this);
  }

 private:
  std::size_t input_dim_;
  std::size_t num_outputs_;
  std::vector<double> params_;  // weights (outputs x inputs), then biases
};

// One hidden layer with rectified activation.
class Mlp final : public Classifier {
 public:
  Mlp(std::size_t input_dim, std::size_t hidden, std::size_t num_outputs);

  ModelKind kind() const override { return ModelKind::mlp; }
  std::size_t input_dim() const override { return input_dim_; }
  std::size_t num_outputs() const override { return num_outputs_; }
  std::size_t hidden_dim() const override { return hidden_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  Matrix logits(const Matrix& x) const override;
  void backward(const Matrix& x, const Matrix& dlogits, std::span<double> grad) const override;
  std::unique_ptr<Classifier> clone() const override { return std::make_unique<Mlp>(*this); }

 private:
  Matrix hidden_activations(const Matrix& x) const;

  std::size_t input_dim_;
  std::size_t hidden_;
  std::size_t num_outputs_;
  // w1 (hidden x inputs), b1, w2 (outputs x hidden), b2
  std::vector<double> params_;
};

// Glorot-uniform weights, zero biases.
std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec, std::size_t input_dim,
                                            std::size_t num_outputs, Rng& rng);

// Max-shifted softmax in place.
void softmax_inplace(std::span<double> values);

// -ln(clamp(p[target], xi, 1 - xi)).
double clipped_cross_entropy(std::span<const double> prediction, std::size_t target, double xi);

// Cross-entropy against a soft target with the same clamp; writes dL/dp into
// dprob (zero where the prediction was clamped). Zero-weight targets are
// skipped entirely.
double soft_target_loss(std::span<const double> prediction, std::span<const double> target,
                        double xi, std::span<double> dprob);

class LearningRateSchedule {
 public:
  LearningRateSchedule() : LearningRateSchedule({{0, 0.1}}) {}
  // (first epoch, rate) pairs; boundaries strictly increasing, first at 0.
  explicit LearningRateSchedule(std::vector<std::pair<std::size_t, double>> steps);

  static LearningRateSchedule parse(const std::string& text);  // "0:0.1,20:0.01"
  std::string to_string() const;

  double rate_at(std::size_t epoch) const;
  double initial_rate() const { return steps_.front().second; }

 private:
  std::vector<std::pair<std::size_t, double>> steps_;
};

struct TrainConfig {
  LearningRateSchedule schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 128;
  double clip_epsilon = 1e-20;
};

// Heavy-ball SGD with L2 weight decay folded into the gradient.
class SgdMomentum {
 public:
  explicit SgdMomentum(std::size_t size) : velocity_(size, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr, double momentum,
            double weight_decay);

 private:
  std::vector<double> velocity_;
};

// Per-sample loss on the predicted probabilities of batch row `row`; returns
// the loss and writes dL/dp.
using ProbabilityLoss =
    std::function<double(std::size_t row, std::span<const double> prob, std::span<double> dprob)>;

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // d(mean loss)/d(parameters), no weight decay
  Matrix probabilities;
};

LossAndGradient loss_and_gradient(const Classifier& model, const Matrix& x,
                                  const ProbabilityLoss& loss);

// d(loss)/d(logits) for a softmax output given d(loss)/d(probabilities).
void softmax_backward(std::span<const double> prob, std::span<const double> dprob,
                      std::span<double> dlogits);

// One optimizer step on the mean batch loss; returns the pre-update loss.
// Throws std::runtime_error on a non-finite gradient.
double train_step(Classifier& model, SgdMomentum& optimizer, const Matrix& x,
                  const ProbabilityLoss& loss, double lr, const TrainConfig& cfg);
double train_step(Classifier& model, SgdMomentum& optimizer, const Matrix& x,
                  std::span<const std::size_t> targets, double lr, const TrainConfig& cfg);

std::size_t argmax(std::span<const double> values);

// Fraction of samples whose argmax over the data's K classes equals the true
// label; an extra outlier output is ignored.
double evaluate(const Classifier& model, const Dataset& data);

void save_classifier(const std::string& path, const Classifier& model);
std::vector<std::uint8_t> serialize_classifier(const Classifier& model);
std::unique_ptr<Classifier> load_classifier(const std::string& path);

}  // namespace lccn
