#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "lccn/experiment.hpp"
#include "lccn/noise_model.hpp"

namespace {

using namespace lccn::cli;

// Adds one optional flag per config key; values land in `overrides`.
void add_override_flags(CLI::App& cmd, std::map<std::string, std::string>& overrides,
                        std::map<std::string, std::string>& staging) {
  for (const auto& key : lccn::config_keys()) {
    const std::string names = key == "method" ? "--method,--mode" : "--" + key;
    cmd.add_option(names, staging[key], "config key " + key);
  }
  cmd.callback([&overrides, &staging, &cmd] {
    for (const auto& key : lccn::config_keys()) {
      if (cmd.count("--" + key) > 0) overrides[key] = staging[key];
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LCCN: latent class-conditional noise training on synthetic data"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic noisy dataset");
  gen_cmd->add_option("--k", gen.classes, "number of classes")->check(CLI::Range(2, 65535));
  gen_cmd->add_option("--d", gen.features, "feature dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--n", gen.samples, "training samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--separation", gen.separation, "distance between class means");
  gen_cmd->add_option("--kind", gen.kind, "noise kind")
      ->check(CLI::IsMember({"none", "pairwise", "circular", "symmetric"}));
  gen_cmd->add_option("--r", gen.rate, "noise rate")->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--flip-map", gen.flip_map, "pairwise map, e.g. 0:1,2:3");
  gen_cmd->add_option("--groups", gen.groups, "circular groups, e.g. 0,1,2;3,4");
  gen_cmd->add_option("--outliers", gen.outliers, "number of outliers");
  gen_cmd->add_option("--outlier-policy", gen.outlier_policy, "uniform or class_proportional");
  gen_cmd->add_option("--clean", gen.clean, "in-distribution samples flagged clean");
  gen_cmd->add_option("--clean-outliers", gen.clean_outliers, "outliers flagged clean");
  gen_cmd->add_option("--test-n", gen.test_samples, "test samples (default n/2)");
  gen_cmd->add_option("--seed", gen.seed, "root seed");
  gen_cmd->add_option("--out", gen.out, "output path")->required();

  TrainOptions train;
  std::map<std::string, std::string> train_staging;
  auto* train_cmd = app.add_subcommand("train", "train one model");
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--data", train.data, "training dataset")->required();
  train_cmd->add_option("--test", train.test, "test dataset (default <data>.test if present)");
  train_cmd->add_option("--seed", train.seed, "root seed");
  train_cmd->add_option("--out-dir", train.out_dir, "output directory");
  add_override_flags(*train_cmd, train.overrides, train_staging);

  std::string eval_model;
  std::string eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "closed-set accuracy of a saved model");
  eval_cmd->add_option("--model", eval_model, "model file")->required();
  eval_cmd->add_option("--data", eval_data, "dataset")->required();

  OracleOptions oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "check the sampler against exact enumeration");
  oracle_cmd->add_option("--max-n", oracle.max_samples, "largest instance size");
  oracle_cmd->add_option("--max-k", oracle.max_classes, "largest class count");
  oracle_cmd->add_option("--seeds", oracle.seeds, "instances per grid cell");
  oracle_cmd->add_option("--tv-sweeps", oracle.tv_sweeps, "Gibbs sweeps for the TV check, 0 skips");
  oracle_cmd->add_option("--tv-instances", oracle.tv_instances, "instances for the TV check");
  oracle_cmd->add_option("--tv-tolerance", oracle.tv_tolerance, "TV tolerance");
  oracle_cmd->add_flag("--corrupt", oracle.corrupt, "perturb the closed form so the check fails");
  oracle_cmd->add_option("--seed", oracle.seed, "root seed");

  SweepOptions sweep;
  std::map<std::string, std::string> sweep_staging;
  auto* sweep_cmd = app.add_subcommand("sweep", "train over several seeds and aggregate");
  sweep_cmd->add_option("--config", sweep.train.config, "key = value config file");
  sweep_cmd->add_option("--data", sweep.train.data, "training dataset")->required();
  sweep_cmd->add_option("--test", sweep.train.test, "test dataset");
  sweep_cmd->add_option("--seeds", sweep.seeds, "seeds, space or comma separated")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--out-dir", sweep.train.out_dir, "output directory");
  add_override_flags(*sweep_cmd, sweep.train.overrides, sweep_staging);

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "summarize run reports");
  report_cmd->add_option("inputs", report.inputs, "report.jsonl files")->required();
  report_cmd->add_option("--histogram", report.histogram, "write update-magnitude histogram CSV");
  report_cmd->add_option("--edges", report.edges, "comma-separated histogram edges");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval_model, eval_data);
    if (*oracle_cmd) return run_oracle(oracle);
    if (*sweep_cmd) return run_sweep(sweep);
    if (*report_cmd) return run_report(report);
  } catch (const lccn::SafeguardViolation& e) {
    std::cerr << "safeguard violation: " << e.what() << "\n";
    return kExitAudit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
