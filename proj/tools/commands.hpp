#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lccn::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitAudit = 2;
inline constexpr int kExitUsage = 64;

struct GenOptions {
  std::size_t classes = 2;
  std::size_t features = 8;
  std::size_t samples = 20000;
  double separation = 3.0;
  std::string kind = "none";
  double rate = 0.0;
  std::string flip_map;
  std::string groups;
  std::size_t outliers = 0;
  std::string outlier_policy = "uniform";
  std::size_t clean = 0;
  std::size_t clean_outliers = 0;
  std::optional<std::size_t> test_samples;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainOptions {
  std::string config;
  std::map<std::string, std::string> overrides;
  std::string data;
  std::string test;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

struct OracleOptions {
  std::size_t max_samples = 6;
  std::size_t max_classes = 3;
  std::size_t seeds = 50;
  std::size_t tv_sweeps = 100000;
  std::size_t tv_instances = 5;
  double tv_tolerance = 0.01;
  bool corrupt = false;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  TrainOptions train;
  std::vector<std::uint64_t> seeds;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::string histogram;
  std::string edges = "0,0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2,0.5,1";
};

int run_gen(const GenOptions& opts);
int run_train(const TrainOptions& opts);
int run_eval(const std::string& model, const std::string& data);
int run_oracle(const OracleOptions& opts);
int run_sweep(const SweepOptions& opts);
int run_report(const ReportOptions& opts);

}  // namespace lccn::cli
