#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lccn/baselines.hpp"
#include "lccn/trainer.hpp"

namespace lccn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Flat "key = value" lines; '#' starts a comment, blank lines are skipped.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in, const std::string& source = "config");
KeyValues read_key_values(const std::string& path);

// Every key build_run_config understands.
const std::vector<std::string>& config_keys();

// One training run: an LCCN mode or a baseline method.
struct RunConfig {
  bool is_lccn = true;
  TrainerConfig trainer;
  BaselineConfig baseline;

  std::string method_name() const;
};

// Unknown keys and malformed values raise ConfigError.
RunConfig build_run_config(const KeyValues& values);

struct RunOutcome {
  std::unique_ptr<Classifier> classifier;
  std::optional<TransitionMatrix> transition;
  RunReport report;
  std::vector<BatchUpdate> updates;
  std::optional<LatentAssignment> assignment;
  std::optional<double> initial_correction_ratio;
  std::optional<double> final_correction_ratio;
};

RunOutcome execute(const RunConfig& cfg, const Dataset& train, const Dataset* test,
                   std::uint64_t seed);

// Scalar summary of a finished run, keyed by metric name.
std::map<std::string, double> summarize(const RunOutcome& outcome);

}  // namespace lccn
