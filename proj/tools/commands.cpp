#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lccn/baselines.hpp"
#include "lccn/dataset.hpp"
#include "lccn/experiment.hpp"
#include "lccn/metrics.hpp"
#include "lccn/oracle.hpp"
#include "lccn/trainer.hpp"

namespace lccn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json transition_json(const TransitionMatrix& phi) {
  json rows = json::array();
  for (std::size_t k = 0; k < phi.num_latent(); ++k) {
    rows.push_back(std::vector<double>(phi.row(k).begin(), phi.row(k).end()));
  }
  return rows;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

RunConfig load_run_config(const TrainOptions& opts) {
  KeyValues values;
  if (!opts.config.empty()) values = read_key_values(opts.config);
  for (const auto& [key, value] : opts.overrides) values[key] = value;
  return build_run_config(values);
}

Dataset load_test(const TrainOptions& opts, bool& present) {
  std::string path = opts.test;
  if (path.empty() && fs::exists(opts.data + ".test")) path = opts.data + ".test";
  present = !path.empty();
  return present ? read_dataset(path) : Dataset{};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct RunArtifacts {
  std::map<std::string, double> summary;
  json config;
};

// Trains one run and writes its artifacts into `dir`.
RunArtifacts train_into(const RunConfig& cfg, const Dataset& train, const Dataset* test,
                        std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  auto outcome = execute(cfg, train, test, seed);
  save_classifier((dir / "model.bin").string(), *outcome.classifier);
  emit_report((dir / "report.jsonl").string(), outcome.report);
  if (outcome.transition) write_transition_csv((dir / "transition.csv").string(), *outcome.transition);
  if (!outcome.updates.empty()) {
    std::ostringstream trace;
    write_transition_trace_csv(trace, outcome.updates);
    write_text(dir / "trace.csv", trace.str());
  }
  if (outcome.assignment) {
    std::ostringstream z;
    write_assignment_csv(z, *outcome.assignment);
    write_text(dir / "assignment.csv", z.str());
  }
  return {summarize(outcome), outcome.report.header.value("config", json::object())};
}

std::string summary_line(const std::map<std::string, double>& s) {
  std::string line;
  auto add = [&](const char* key, const char* label) {
    if (const auto it = s.find(key); it != s.end()) {
      if (!line.empty()) line += ' ';
      line += std::string(label) + "=" + fmt(it->second, key == std::string("test_accuracy") ? 4 : 6);
    }
  };
  add("test_accuracy", "accuracy");
  add("transition_l1_mean", "transition_l1");
  add("correction_ratio", "correction_ratio");
  add("max_update", "max_update");
  add("max_bound", "bound");
  return line.empty() ? "no metrics" : line;
}

std::vector<double> parse_edges(const std::string& text) {
  std::vector<double> edges;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) edges.push_back(std::stod(item));
  return edges;
}

}  // namespace

int run_gen(const GenOptions& opts) {
  if (opts.samples % opts.classes != 0) {
    std::cerr << "error: --n must be a multiple of --k\n";
    return kExitUsage;
  }
  ScenarioSpec spec;
  spec.num_classes = opts.classes;
  spec.num_features = opts.features;
  spec.n_per_class = opts.samples / opts.classes;
  spec.separation = opts.separation;
  spec.noise.kind = parse_noise_kind(opts.kind);
  spec.noise.rate = opts.rate;
  if (!opts.flip_map.empty()) spec.noise.flip_map = parse_flip_map(opts.flip_map);
  if (!opts.groups.empty()) spec.noise.groups = parse_groups(opts.groups);
  spec.outliers = opts.outliers;
  spec.outlier_policy = parse_outlier_policy(opts.outlier_policy);
  spec.clean = opts.clean;
  spec.clean_outliers = opts.clean_outliers;
  const auto test_samples = opts.test_samples.value_or(opts.samples / 2);
  spec.test_per_class = test_samples / opts.classes;

  const auto scenario = make_scenario(spec, opts.seed);
  write_dataset(scenario.train, opts.out);
  write_dataset(scenario.test, opts.out + ".test");

  json manifest;
  manifest["generator"] = scenario.train.meta.generator;
  manifest["noise"] = scenario.train.meta.noise;
  manifest["seed"] = opts.seed;
  manifest["spec"] = {{"k", opts.classes},
                      {"d", opts.features},
                      {"n", opts.samples},
                      {"separation", opts.separation},
                      {"kind", opts.kind},
                      {"r", opts.rate},
                      {"flip_map", opts.flip_map},
                      {"groups", opts.groups},
                      {"outliers", opts.outliers},
                      {"outlier_policy", opts.outlier_policy},
                      {"clean", opts.clean},
                      {"clean_outliers", opts.clean_outliers},
                      {"test_n", spec.test_per_class * opts.classes}};
  manifest["files"] = {{"train", fs::path(opts.out).filename().string()},
                       {"test", fs::path(opts.out + ".test").filename().string()}};
  manifest["true_transition"] = transition_json(true_transition(scenario.train));
  write_text(opts.out + ".json", manifest.dump(2) + "\n");
  std::cout << "wrote " << opts.out << " (" << scenario.train.num_samples << " samples), "
            << opts.out << ".test, " << opts.out << ".json\n";
  return kExitOk;
}

int run_train(const TrainOptions& opts) {
  const auto cfg = load_run_config(opts);
  const auto train = read_dataset(opts.data);
  bool has_test = false;
  const auto test = load_test(opts, has_test);
  const auto artifacts =
      train_into(cfg, train, has_test ? &test : nullptr, opts.seed, fs::path(opts.out_dir));
  std::cout << cfg.method_name() << " seed=" << opts.seed << " " << summary_line(artifacts.summary)
            << "\n";
  return kExitOk;
}

int run_eval(const std::string& model_path, const std::string& data_path) {
  const auto model = load_classifier(model_path);
  const auto data = read_dataset(data_path);
  if (model->input_dim() != data.num_features) {
    throw std::invalid_argument("model expects " + std::to_string(model->input_dim()) +
                                " features, data has " + std::to_string(data.num_features));
  }
  std::cout << "accuracy=" << fmt(evaluate(*model, data)) << " samples=" << data.num_samples << "\n";
  return kExitOk;
}

int run_oracle(const OracleOptions& opts) {
  OracleGrid grid;
  grid.max_samples = opts.max_samples;
  grid.max_classes = opts.max_classes;
  grid.seeds = opts.seeds;
  grid.root_seed = opts.seed;
  if (opts.corrupt) grid.corrupt_factor = 1.5;
  double states = 1.0;
  for (std::size_t n = 0; n < opts.max_samples; ++n) states *= static_cast<double>(opts.max_classes);
  if (states > static_cast<double>(kExactPosteriorMaxStates)) {
    std::cerr << "error: grid too large (K^N = " << states << " > " << kExactPosteriorMaxStates
              << ")\n";
    return kExitUsage;
  }
  const auto report = run_conditional_oracle(grid);
  std::printf("%-4s %-4s %-10s %-14s %s\n", "N", "K", "instances", "max_rel_err", "result");
  for (const auto& c : report.cases) {
    std::printf("%-4zu %-4zu %-10zu %-14.3e %s\n", c.num_samples, c.num_classes, c.instances,
                c.max_relative_error, c.pass ? "PASS" : "FAIL");
  }
  std::printf("conditional oracle: max relative error %.3e (tolerance %.0e) %s\n",
              report.max_relative_error, grid.tolerance, report.pass ? "PASS" : "FAIL");
  bool pass = report.pass;
  if (opts.tv_sweeps > 0) {
    double worst = 0.0;
    for (std::size_t i = 0; i < opts.tv_instances; ++i) {
      Rng rng(splitmix64(opts.seed + 0x7f4a7c15 + i));
      const auto inst = random_instance(4, 2, rng);
      worst = std::max(worst, gibbs_mixing(inst, opts.tv_sweeps, 1000, rng).total_variation);
    }
    const bool tv_pass = worst <= opts.tv_tolerance;
    std::printf("gibbs mixing: N=4 K=2 instances=%zu sweeps=%zu max TV %.4f (tolerance %.3g) %s\n",
                opts.tv_instances, opts.tv_sweeps, worst, opts.tv_tolerance,
                tv_pass ? "PASS" : "FAIL");
    pass = pass && tv_pass;
  }
  return pass ? kExitOk : kExitFailure;
}

int run_sweep(const SweepOptions& opts) {
  if (opts.seeds.size() < 2) {
    std::cerr << "error: sweep needs at least two seeds\n";
    return kExitUsage;
  }
  const auto cfg = load_run_config(opts.train);
  const auto train = read_dataset(opts.train.data);
  bool has_test = false;
  const auto test = load_test(opts.train, has_test);

  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LCCN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) threads = static_cast<std::size_t>(v);
  }
  threads = std::min(threads, opts.seeds.size());

  std::vector<RunArtifacts> results(opts.seeds.size());
  std::vector<std::exception_ptr> errors(opts.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < opts.seeds.size(); i = next++) {
      try {
        // Repeated seeds get the replica index appended so directories stay distinct.
        std::string name = "seed-" + std::to_string(opts.seeds[i]);
        if (std::count(opts.seeds.begin(), opts.seeds.end(), opts.seeds[i]) > 1) {
          name += "-" + std::to_string(i);
        }
        const auto dir = fs::path(opts.train.out_dir) / name;
        results[i] = train_into(cfg, train, has_test ? &test : nullptr, opts.seeds[i], dir);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& r : results) {
    if (r.config != results.front().config) throw std::invalid_argument("mismatched configs across runs");
  }

  std::vector<std::map<std::string, double>> runs;
  for (const auto& r : results) runs.push_back(r.summary);
  const auto agg = aggregate(runs);
  json summary;
  summary["method"] = cfg.method_name();
  summary["seeds"] = opts.seeds;
  summary["config"] = results.front().config;
  std::printf("%s over %zu seeds\n", cfg.method_name().c_str(), opts.seeds.size());
  for (const auto& [name, s] : agg) {
    summary["metrics"][name] = {{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
    std::printf("  %-20s %.6f +- %.6f\n", name.c_str(), s.mean, s.stddev);
  }
  fs::create_directories(opts.train.out_dir);
  write_text(fs::path(opts.train.out_dir) / "summary.json", summary.dump(2) + "\n");
  return kExitOk;
}

int run_report(const ReportOptions& opts) {
  std::vector<RunReport> reports;
  for (const auto& path : opts.inputs) {
    auto loaded = load_reports(path);
    for (auto& r : loaded) reports.push_back(std::move(r));
  }
  if (reports.empty()) throw std::invalid_argument("no reports found");
  std::vector<std::map<std::string, double>> runs;
  std::vector<double> magnitudes;
  for (const auto& r : reports) {
    std::map<std::string, double> m;
    if (const auto* last = r.last_epoch()) {
      if (last->test_accuracy) m["test_accuracy"] = *last->test_accuracy;
      if (last->correction_ratio) m["correction_ratio"] = *last->correction_ratio;
      if (!last->transition_l1_per_row.empty()) {
        const auto& rows = last->transition_l1_per_row;
        m["transition_l1_mean"] =
            std::accumulate(rows.begin(), rows.end(), 0.0) / static_cast<double>(rows.size());
      }
      m["train_loss"] = last->train_loss;
    }
    double max_update = 0.0;
    double max_bound = 0.0;
    for (const auto* u : r.of_type("updates")) {
      max_update = std::max(max_update, u->max_update_magnitude);
      max_bound = std::max(max_bound, u->safeguard_bound_max);
      magnitudes.insert(magnitudes.end(), u->update_magnitudes.begin(), u->update_magnitudes.end());
    }
    if (!r.of_type("updates").empty()) m["max_update"] = max_update;
    if (max_bound > 0.0) m["max_bound"] = max_bound;
    std::cout << r.run_id << ": " << summary_line(m) << "\n";
    runs.push_back(std::move(m));
  }
  if (reports.size() > 1) {
    const auto config = reports.front().header.value("config", json::object());
    for (const auto& r : reports) {
      if (r.header.value("config", json::object()) != config) {
        throw std::invalid_argument("mismatched configs across runs");
      }
    }
    for (const auto& [name, s] : aggregate(runs)) {
      std::printf("  %-20s %.6f +- %.6f (n=%zu)\n", name.c_str(), s.mean, s.stddev, s.count);
    }
  }
  if (!opts.histogram.empty()) {
    const auto edges = parse_edges(opts.edges);
    const auto counts = histogram(magnitudes, edges);
    std::ofstream out(opts.histogram);
    if (!out) throw std::runtime_error("cannot write " + opts.histogram);
    write_histogram_csv(out, edges, counts);
  }
  return kExitOk;
}

}  // namespace lccn::cli
