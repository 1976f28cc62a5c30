#include "lccn/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "lccn/dataset.hpp"

namespace lccn {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'C', 'N'};
constexpr std::uint16_t kVersion = 1;

void check_input(const Matrix& x, std::size_t input_dim) {
  if (x.cols() != input_dim) throw std::invalid_argument("feature dimension mismatch");
}

void glorot_fill(std::span<double> values, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : values) v = (2.0 * rng.uniform() - 1.0) * s;
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "linear") return ModelKind::linear;
  if (name == "mlp") return ModelKind::mlp;
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

std::string to_string(ModelKind kind) { return kind == ModelKind::linear ? "linear" : "mlp"; }

Matrix Classifier::predict_batch(const Matrix& x) const {
  Matrix out = logits(x);
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

std::vector<double> Classifier::predict(std::span<const double> x) const {
  Matrix one(1, x.size());
  std::copy(x.begin(), x.end(), one.row(0).begin());
  const auto probs = predict_batch(one);
  return {probs.row(0).begin(), probs.row(0).end()};
}

LinearSoftmax::LinearSoftmax(std::size_t input_dim, std::size_t num_outputs)
    : input_dim_(input_dim), num_outputs_(num_outputs), params_(num_outputs * (input_dim + 1), 0.0) {
  if (input_dim == 0 || num_outputs < 2) throw std::invalid_argument("bad linear model shape");
}

Matrix LinearSoftmax::logits(const Matrix& x) const {
  check_input(x, input_dim_);
  Matrix out(x.rows(), num_outputs_);
  const double* bias = params_.data() + num_outputs_ * input_dim_;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    for (std::size_t c = 0; c < num_outputs_; ++c) {
      const double* w = params_.data() + c * input_dim_;
      double acc = bias[c];
      for (std::size_t j = 0; j < input_dim_; ++j) acc += w[j] * xi[j];
      out(i, c) = acc;
    }
  }
  return out;
}

void LinearSoftmax::backward(const Matrix& x, const Matrix& dlogits, std::span<double> grad) const {
  check_input(x, input_dim_);
  double* gbias = grad.data() + num_outputs_ * input_dim_;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    for (std::size_t c = 0; c < num_outputs_; ++c) {
      const double g = dlogits(i, c);
      if (g == 0.0) continue;
      double* gw = grad.data() + c * input_dim_;
      for (std::size_t j = 0; j < input_dim_; ++j) gw[j] += g * xi[j];
      gbias[c] += g;
    }
  }
}

Mlp::Mlp(std::size_t input_dim, std::size_t hidden, std::size_t num_outputs)
    : input_dim_(input_dim),
      hidden_(hidden),
      num_outputs_(num_outputs),
      params_(hidden * input_dim + hidden + num_outputs * hidden + num_outputs, 0.0) {
  if (input_dim == 0 || hidden == 0 || num_outputs < 2) throw std::invalid_argument("bad mlp shape");
}

Matrix Mlp::hidden_activations(const Matrix& x) const {
  check_input(x, input_dim_);
  const double* w1 = params_.data();
  const double* b1 = w1 + hidden_ * input_dim_;
  Matrix h(x.rows(), hidden_);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto xi = x.row(i);
    for (std::size_t u = 0; u < hidden_; ++u) {
      double acc = b1[u];
      const double* w = w1 + u * input_dim_;
      for (std::size_t j = 0; j < input_dim_; ++j) acc += w[j] * xi[j];
      h(i, u) = acc > 0.0 ? acc : 0.0;
    }
  }
  return h;
}

Matrix Mlp::logits(const Matrix& x) const {
  const Matrix h = hidden_activations(x);
  const double* w2 = params_.data() + hidden_ * input_dim_ + hidden_;
  const double* b2 = w2 + num_outputs_ * hidden_;
  Matrix out(x.rows(), num_outputs_);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < num_outputs_; ++c) {
      double acc = b2[c];
      const double* w = w2 + c * hidden_;
      for (std::size_t u = 0; u < hidden_; ++u) acc += w[u] * h(i, u);
      out(i, c) = acc;
    }
  }
  return out;
}

void Mlp::backward(const Matrix& x, const Matrix& dlogits, std::span<double> grad) const {
  const Matrix h = hidden_activations(x);
  const std::size_t w2_offset = hidden_ * input_dim_ + hidden_;
  const double* w2 = params_.data() + w2_offset;
  double* gw1 = grad.data();
  double* gb1 = gw1 + hidden_ * input_dim_;
  double* gw2 = grad.data() + w2_offset;
  double* gb2 = gw2 + num_outputs_ * hidden_;
  std::vector<double> dh(hidden_);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t c = 0; c < num_outputs_; ++c) {
      const double g = dlogits(i, c);
      if (g == 0.0) continue;
      for (std::size_t u = 0; u < hidden_; ++u) {
        gw2[c * hidden_ + u] += g * h(i, u);
        dh[u] += g * w2[c * hidden_ + u];
      }
      gb2[c] += g;
    }
    const auto xi = x.row(i);
    for (std::size_t u = 0; u < hidden_; ++u) {
      if (h(i, u) <= 0.0) continue;  // relu gate
      const double g = dh[u];
      double* gw = gw1 + u * input_dim_;
      for (std::size_t j = 0; j < input_dim_; ++j) gw[j] += g * xi[j];
      gb1[u] += g;
    }
  }
}

std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec, std::size_t input_dim,
                                            std::size_t num_outputs, Rng& rng) {
  if (spec.kind == ModelKind::linear) {
    auto model = std::make_unique<LinearSoftmax>(input_dim, num_outputs);
    glorot_fill(model->parameters().first(num_outputs * input_dim), input_dim, num_outputs, rng);
    return model;
  }
  auto model = std::make_unique<Mlp>(input_dim, spec.hidden, num_outputs);
  auto params = model->parameters();
  glorot_fill(params.first(spec.hidden * input_dim), input_dim, spec.hidden, rng);
  glorot_fill(params.subspan(spec.hidden * input_dim + spec.hidden, num_outputs * spec.hidden),
              spec.hidden, num_outputs, rng);
  return model;
}

void softmax_inplace(std::span<double> values) {
  const double top = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : values) v /= total;
}

double clipped_cross_entropy(std::span<const double> prediction, std::size_t target, double xi) {
  return -std::log(std::clamp(prediction[target], xi, 1.0 - xi));
}

double soft_target_loss(std::span<const double> prediction, std::span<const double> target,
                        double xi, std::span<double> dprob) {
  double loss = 0.0;
  for (std::size_t j = 0; j < prediction.size(); ++j) {
    dprob[j] = 0.0;
    if (target[j] == 0.0) continue;
    const double p = prediction[j];
    const double clipped = std::clamp(p, xi, 1.0 - xi);
    loss -= target[j] * std::log(clipped);
    if (clipped == p && p < 1.0 - xi) dprob[j] = -target[j] / p;
  }
  return loss;
}

LearningRateSchedule::LearningRateSchedule(std::vector<std::pair<std::size_t, double>> steps)
    : steps_(std::move(steps)) {
  if (steps_.empty() || steps_.front().first != 0) {
    throw std::invalid_argument("learning-rate schedule must start at epoch 0");
  }
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (!(steps_[i].second >= 0.0) || !std::isfinite(steps_[i].second)) {
      throw std::invalid_argument("learning rates must be finite and non-negative");
    }
    if (i > 0 && steps_[i].first <= steps_[i - 1].first) {
      throw std::invalid_argument("schedule boundaries must be strictly increasing");
    }
  }
}

LearningRateSchedule LearningRateSchedule::parse(const std::string& text) {
  std::vector<std::pair<std::size_t, double>> steps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    try {
      if (colon == std::string::npos) {
        steps.emplace_back(steps.empty() ? 0 : steps.back().first + 1, std::stod(item));
      } else {
        steps.emplace_back(std::stoul(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
      }
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed learning-rate schedule '" + text + "'");
    }
  }
  return LearningRateSchedule(std::move(steps));
}

std::string LearningRateSchedule::to_string() const {
  std::string out;
  char buf[64];
  for (const auto& [epoch, rate] : steps_) {
    if (!out.empty()) out += ',';
    std::snprintf(buf, sizeof(buf), "%zu:%.17g", epoch, rate);
    out += buf;
  }
  return out;
}

double LearningRateSchedule::rate_at(std::size_t epoch) const {
  double rate = steps_.front().second;
  for (const auto& [boundary, r] : steps_) {
    if (epoch >= boundary) rate = r;
  }
  return rate;
}

void SgdMomentum::step(std::span<double> params, std::span<const double> grad, double lr,
                       double momentum, double weight_decay) {
  if (params.size() != velocity_.size() || grad.size() != velocity_.size()) {
    throw std::invalid_argument("optimizer size mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum * velocity_[i] + grad[i] + weight_decay * params[i];
    params[i] -= lr * velocity_[i];
  }
}

void softmax_backward(std::span<const double> prob, std::span<const double> dprob,
                      std::span<double> dlogits) {
  double inner = 0.0;
  for (std::size_t j = 0; j < prob.size(); ++j) inner += prob[j] * dprob[j];
  for (std::size_t j = 0; j < prob.size(); ++j) dlogits[j] = prob[j] * (dprob[j] - inner);
}

LossAndGradient loss_and_gradient(const Classifier& model, const Matrix& x,
                                  const ProbabilityLoss& loss) {
  LossAndGradient out;
  out.probabilities = model.predict_batch(x);
  const std::size_t batch = x.rows();
  const std::size_t c = model.num_outputs();
  Matrix dlogits(batch, c);
  std::vector<double> dprob(c);
  const double scale = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto p = out.probabilities.row(i);
    out.loss += loss(i, p, dprob);
    auto dl = dlogits.row(i);
    softmax_backward(p, dprob, dl);
    for (double& v : dl) v *= scale;
  }
  out.loss *= scale;
  out.gradient.assign(model.parameters().size(), 0.0);
  model.backward(x, dlogits, out.gradient);
  return out;
}

double train_step(Classifier& model, SgdMomentum& optimizer, const Matrix& x,
                  const ProbabilityLoss& loss, double lr, const TrainConfig& cfg) {
  if (x.rows() == 0) return 0.0;
  auto lg = loss_and_gradient(model, x, loss);
  for (double g : lg.gradient) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient");
  }
  optimizer.step(model.parameters(), lg.gradient, lr, cfg.momentum, cfg.weight_decay);
  return lg.loss;
}

double train_step(Classifier& model, SgdMomentum& optimizer, const Matrix& x,
                  std::span<const std::size_t> targets, double lr, const TrainConfig& cfg) {
  if (targets.size() != x.rows()) throw std::invalid_argument("one target per row required");
  const std::size_t c = model.num_outputs();
  for (auto t : targets) {
    if (t >= c) throw std::out_of_range("training target out of range");
  }
  std::vector<double> onehot(c, 0.0);
  const double xi = cfg.clip_epsilon;
  return train_step(
      model, optimizer, x,
      [&](std::size_t row, std::span<const double> p, std::span<double> dp) {
        onehot[targets[row]] = 1.0;
        const double l = soft_target_loss(p, onehot, xi, dp);
        onehot[targets[row]] = 0.0;
        return l;
      },
      lr, cfg);
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

double evaluate(const Classifier& model, const Dataset& data) {
  if (!data.has_true_labels()) throw std::invalid_argument("evaluation requires ground truth");
  if (data.num_samples == 0) return 0.0;
  if (model.num_outputs() < data.num_classes) {
    throw std::invalid_argument("classifier has fewer outputs than the data has classes");
  }
  // An outlier output never counts as a prediction on known-class data.
  const std::size_t known = data.num_classes;
  constexpr std::size_t kChunk = 4096;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.num_samples; start += kChunk) {
    const std::size_t end = std::min(data.num_samples, start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto logits = model.logits(gather_features(data, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (argmax(logits.row(i).first(known)) == data.true_labels[idx[i]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.num_samples);
}

std::vector<std::uint8_t> serialize_classifier(const Classifier& model) {
  detail::ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint16_t>(model.kind()));
  w.put(static_cast<std::uint32_t>(model.input_dim()));
  w.put(static_cast<std::uint32_t>(model.hidden_dim()));
  w.put(static_cast<std::uint32_t>(model.num_outputs()));
  for (double v : model.parameters()) w.put_f64(v);
  return std::move(w.bytes());
}

void save_classifier(const std::string& path, const Classifier& model) {
  detail::write_file(path, serialize_classifier(model));
}

std::unique_ptr<Classifier> load_classifier(const std::string& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.get_raw(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw std::runtime_error("not a model file (bad magic)");
  if (r.get<std::uint16_t>() != kVersion) throw std::runtime_error("unsupported model version");
  const auto kind = r.get<std::uint16_t>();
  const auto input_dim = r.get<std::uint32_t>();
  const auto hidden = r.get<std::uint32_t>();
  const auto outputs = r.get<std::uint32_t>();
  std::unique_ptr<Classifier> model;
  if (kind == static_cast<std::uint16_t>(ModelKind::linear)) {
    model = std::make_unique<LinearSoftmax>(input_dim, outputs);
  } else if (kind == static_cast<std::uint16_t>(ModelKind::mlp)) {
    model = std::make_unique<Mlp>(input_dim, hidden, outputs);
  } else {
    throw std::runtime_error("unknown model kind in file");
  }
  auto params = model->parameters();
  if (r.remaining() != params.size() * 8) throw std::runtime_error("model file size mismatch");
  for (double& v : params) v = r.get_f64();
  return model;
}

}  // namespace lccn
