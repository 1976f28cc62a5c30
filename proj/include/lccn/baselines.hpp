#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lccn/classifier.hpp"
#include "lccn/dataset.hpp"
#include "lccn/harness.hpp"
#include "lccn/metrics.hpp"
#include "lccn/noise_model.hpp"

namespace lccn {

enum class BaselineMethod { ce, bootstrap_hard, forward, s_adaptation };

BaselineMethod parse_baseline_method(const std::string& name);
std::string to_string(BaselineMethod method);

// Where forward correction gets its fixed transition.
enum class ForwardSource { truth, estimated, file };

ForwardSource parse_forward_source(const std::string& name);
std::string to_string(ForwardSource source);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::ce;
  HarnessConfig harness;
  double beta = 0.8;  // weight on the noisy label in hard bootstrapping
  ForwardSource forward_source = ForwardSource::truth;
  std::string transition_path;  // file source
  std::int64_t s_adapt_warmup_steps = 0;  // batches with the transition frozen
  double transition_lr_scale = 1.0;       // transition rate relative to the classifier's
};

nlohmann::json to_json(const BaselineConfig& cfg);

struct BaselineResult {
  std::unique_ptr<Classifier> classifier;
  std::optional<TransitionMatrix> transition;  // forward and S-adaptation
  RunReport report;
  std::vector<BatchUpdate> updates;  // S-adaptation: per-batch row changes
  std::vector<double> test_accuracy_per_epoch;
};

BaselineResult train_ce(const Dataset& train, const Dataset* test, const BaselineConfig& cfg,
                        std::uint64_t seed);
BaselineResult train_bootstrap_hard(const Dataset& train, const Dataset* test,
                                    const BaselineConfig& cfg, std::uint64_t seed);
// Throws std::invalid_argument unless `transition` is K x K row-stochastic.
BaselineResult train_forward(const Dataset& train, const Dataset* test,
                             const TransitionMatrix& transition, const BaselineConfig& cfg,
                             std::uint64_t seed);
BaselineResult train_s_adaptation(const Dataset& train, const Dataset* test,
                                  const BaselineConfig& cfg, std::uint64_t seed);

// Dispatches on cfg.method, resolving the forward transition from its source.
BaselineResult run_baseline(const BaselineConfig& cfg, const Dataset& train, const Dataset* test,
                            std::uint64_t seed);

// Row-wise softmax of the unconstrained parameters.
TransitionMatrix softmax_rows(std::span<const double> weights, std::size_t rows, std::size_t cols);

// Unconstrained parameters that map back to `phi`: log phi floored at log xi.
std::vector<double> transition_logits(const TransitionMatrix& phi, double xi);

// Mean forward-corrected loss over a batch with the transition given by
// softmax_rows(weights). Writes dL/dweights when `grad` is non-empty.
double s_adaptation_loss(const Matrix& probabilities, std::span<const std::size_t> labels,
                         std::span<const double> weights, std::size_t num_observed, double xi,
                         std::span<double> grad);

// CSV rows: step,row,l1_change.
void write_transition_trace_csv(std::ostream& out, std::span<const BatchUpdate> trace);

}  // namespace lccn
