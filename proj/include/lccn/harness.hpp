#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include <json.hpp>

#include "lccn/classifier.hpp"
#include "lccn/dataset.hpp"
#include "lccn/rng.hpp"

namespace lccn {

// Settings shared by the LCCN trainer and every baseline so that runs under
// one seed differ only in the method.
struct HarnessConfig {
  std::size_t epochs = 30;          // main phase
  std::size_t pretrain_epochs = 10; // CE on noisy labels at the first scheduled rate
  TrainConfig train;
  ModelSpec model;
  bool record_wall_time = false;    // wall_time_ms stays 0 otherwise
  std::size_t update_window = 100;  // batches per "updates" report record
};

nlohmann::json to_json(const HarnessConfig& cfg);

// Shuffled batches covering 0..n-1 once; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng);

std::unique_ptr<Classifier> init_classifier(const HarnessConfig& cfg, std::size_t input_dim,
                                            std::size_t num_outputs, std::uint64_t seed);

// Plain clipped-CE passes over the noisy labels.
void pretrain(Classifier& model, const Dataset& data, const HarnessConfig& cfg, Rng& shuffle);

// Per-batch transition change record shared by the LCCN audit trail and the
// S-adaptation trace.
struct BatchUpdate {
  std::int64_t step = 0;
  std::size_t epoch = 0;
  bool warming = false;  // sampled under the warm-up transition, or frozen S-adaptation
  std::vector<double> changes;    // per-row L1 change
  std::vector<double> bounds;     // per-row safeguard bound (empty for S-adaptation)
  std::vector<std::uint64_t> row_counts;  // counts before the batch (LCCN only)

  double max_change() const;
};

// Collects per-batch magnitudes into "updates" report records.
class UpdateWindow {
 public:
  explicit UpdateWindow(std::size_t size) : size_(size) {}
  // Returns true when a record should be flushed after this batch.
  bool add(double max_change, double bound);
  std::vector<double> take(double& bound_max);

 private:
  std::size_t size_;
  std::vector<double> values_;
  double bound_max_ = 0.0;
};

// Milliseconds since construction, or always 0 when disabled so reports stay
// byte-identical across runs.
class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    if (!enabled_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace lccn
