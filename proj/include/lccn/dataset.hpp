#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lccn/matrix.hpp"
#include "lccn/noise_model.hpp"
#include "lccn/rng.hpp"

namespace lccn {

enum class NoiseKind { none, pairwise, circular, symmetric };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double rate = 0.0;
  std::map<std::size_t, std::size_t> flip_map;     // pairwise
  std::vector<std::vector<std::size_t>> groups;    // circular, each group ordered
};

// "0:1,2:3"
std::map<std::size_t, std::size_t> parse_flip_map(const std::string& text);
std::string format_flip_map(const std::map<std::size_t, std::size_t>& flip_map);
// "0,1,2;3,4"
std::vector<std::vector<std::size_t>> parse_groups(const std::string& text);
std::string format_groups(const std::vector<std::vector<std::size_t>>& groups);

// Provenance carried alongside a dataset; not part of the binary format.
struct DatasetMeta {
  std::string generator;
  std::uint64_t seed = 0;
  std::string noise;
};

// Features plus noisy labels. true_labels (hidden ground truth) and
// clean_flags are optional and empty when absent. Outliers carry the true
// label num_classes.
struct Dataset {
  std::size_t num_samples = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<float> features;  // row-major, num_samples x num_features
  std::vector<std::uint16_t> noisy_labels;
  std::vector<std::uint16_t> true_labels;
  std::vector<std::uint8_t> clean_flags;
  DatasetMeta meta;

  bool has_true_labels() const { return !true_labels.empty(); }
  bool has_clean_flags() const { return !clean_flags.empty(); }
  bool is_outlier(std::size_t n) const {
    return has_true_labels() && true_labels[n] == num_classes;
  }
  bool has_outliers() const;
  std::size_t num_clean_flagged() const;
  std::span<const float> row(std::size_t n) const {
    return {features.data() + n * num_features, num_features};
  }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;

  // Data fields only; meta is ignored.
  bool same_data(const Dataset& other) const;
};

Matrix gather_features(const Dataset& data, std::span<const std::size_t> indices);
Matrix all_features(const Dataset& data);

// Copy with noisy labels replaced by the true labels (outliers dropped).
Dataset with_true_labels(const Dataset& data);

// Class k has mean (separation / sqrt 2) * e_k, so every pair of means is
// `separation` apart; unit isotropic noise. d is padded up to k. Samples are
// emitted in shuffled order with balanced classes.
Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t num_features,
                             std::size_t n_per_class, double separation, Rng& rng);

Dataset inject_pairwise(Dataset data, const std::map<std::size_t, std::size_t>& flip_map,
                        double rate, Rng& rng);
Dataset inject_circular(Dataset data, const std::vector<std::vector<std::size_t>>& groups,
                        double rate, Rng& rng);
// With probability `rate` the label moves to a uniformly chosen other class.
Dataset inject_symmetric(Dataset data, double rate, Rng& rng);
Dataset inject_noise(Dataset data, const NoiseSpec& spec, Rng& rng);

enum class OutlierLabelPolicy { uniform, class_proportional };
OutlierLabelPolicy parse_outlier_policy(const std::string& name);
std::string to_string(OutlierLabelPolicy policy);

// Appends coordinate-permuted copies of randomly chosen in-distribution samples.
Dataset inject_outliers(Dataset data, std::size_t n_outliers, OutlierLabelPolicy policy, Rng& rng);

// Flags the first n_clean in-distribution samples and the first
// n_clean_outliers outliers, in storage order.
Dataset flag_clean(Dataset data, std::size_t n_clean, std::size_t n_clean_outliers);

// Row-normalized (true label -> noisy label) counts; K+1 rows when the
// dataset holds outliers. Rows without samples are uniform.
TransitionMatrix true_transition(const Dataset& data);

// Binary format: "LCDS", u16 version, u64 N, u32 d, u32 K, u32 flags, f32
// features, u16 noisy labels, [u16 true labels], [u8 clean flags], u32 CRC32.
// All little-endian.
std::vector<std::uint8_t> encode_dataset(const Dataset& data);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const Dataset& data, const std::string& path);
Dataset read_dataset(const std::string& path);

// Pairs 0->1, 2->3, ...; an odd last class is left alone.
std::map<std::size_t, std::size_t> default_flip_map(std::size_t num_classes);

// A full synthetic scenario: training set with noise, outliers and clean
// flags, plus a clean test set drawn from the same mixture.
struct ScenarioSpec {
  std::size_t num_classes = 2;
  std::size_t num_features = 8;
  std::size_t n_per_class = 10000;
  double separation = 3.0;
  NoiseSpec noise;
  std::size_t outliers = 0;
  OutlierLabelPolicy outlier_policy = OutlierLabelPolicy::uniform;
  std::size_t clean = 0;
  std::size_t clean_outliers = 0;
  std::size_t test_per_class = 2500;
};

struct Scenario {
  Dataset train;
  Dataset test;
};

// Each piece draws from its own stream of `seed`.
Scenario make_scenario(const ScenarioSpec& spec, std::uint64_t seed);

// Header row then features, noisy_label, true_label, clean_flag.
void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace lccn
