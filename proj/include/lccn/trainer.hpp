#pragma once

#include <cstddef>
#include <cstdint>
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
#include "lccn/sampler.hpp"

namespace lccn {

enum class Mode { lccn, lccn_outlier, lccn_semi, lccn_outlier_semi };

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);
bool is_outlier_mode(Mode mode);
bool is_semi_mode(Mode mode);

enum class WarmSource { estimated, identity, provided };

WarmSource parse_warm_source(const std::string& name);
std::string to_string(WarmSource source);

struct TrainerConfig {
  Mode mode = Mode::lccn;
  HarnessConfig harness;
  // Unset: one epoch of batches when K < 20, two otherwise.
  std::optional<std::int64_t> warmup_steps;
  // Unset: estimated when K < 20, identity otherwise.
  std::optional<WarmSource> warm_source;
  std::string warm_transition_path;  // provided source
  // Unset: the full length of the LCCN phase in batches.
  std::optional<std::int64_t> max_step;
  // warmup_steps and max_step here are overwritten by the resolved values.
  SamplerConfig sampler;
  std::vector<double> alpha;  // empty: all ones
  bool audit_safeguard = true;
};

struct ResolvedSchedule {
  std::int64_t warmup_steps = 0;
  std::int64_t max_step = 1;
  WarmSource warm_source = WarmSource::estimated;
};

ResolvedSchedule resolve_schedule(const TrainerConfig& cfg, std::size_t num_classes,
                                  std::size_t num_samples);

nlohmann::json to_json(const TrainerConfig& cfg);

struct RunResult {
  std::unique_ptr<Classifier> classifier;
  TransitionMatrix transition;       // posterior mean of the final counts
  TransitionMatrix warm_transition;
  LatentAssignment assignment{0};
  RunReport report;
  std::vector<BatchUpdate> updates;  // one per Gibbs batch
  // Measured on the training labels when ground truth is present.
  std::optional<double> initial_correction_ratio;  // after the first full sweep
  std::optional<double> final_correction_ratio;
  std::vector<double> test_accuracy_per_epoch;
};

// Warm-up transition from classifier predictions and noisy labels:
// phi'(i, j) = sum_t [y_t = j] p(i | x_t) / sum_t p(i | x_t). A latent row
// with no predicted mass falls back to uniform and is listed in
// `empty_rows` when given.
TransitionMatrix warmup_transition(const Classifier& classifier, const Dataset& data,
                                   std::vector<std::size_t>* empty_rows = nullptr);
TransitionMatrix warmup_transition(const Matrix& predictions, std::span<const std::uint16_t> labels,
                                   std::size_t num_observed,
                                   std::vector<std::size_t>* empty_rows = nullptr);

// Fraction of `labels` equal to the hidden true label. An outlier counts as
// correct only when labelled K in outlier mode. Throws std::invalid_argument
// without ground truth or while any label is still unassigned.
double label_correction_ratio(std::span<const std::int32_t> labels, const Dataset& data,
                              bool outlier_mode);

// Throws std::invalid_argument when the data does not suit the mode and
// SafeguardViolation when an audited batch breaks the bound.
RunResult run(const TrainerConfig& cfg, const Dataset& train, const Dataset* test,
              std::uint64_t seed);

}  // namespace lccn
