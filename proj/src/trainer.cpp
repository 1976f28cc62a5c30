#include "lccn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lccn {

Mode parse_mode(const std::string& name) {
  if (name == "lccn") return Mode::lccn;
  if (name == "lccn_outlier") return Mode::lccn_outlier;
  if (name == "lccn_semi") return Mode::lccn_semi;
  if (name == "lccn_outlier_semi") return Mode::lccn_outlier_semi;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::lccn: return "lccn";
    case Mode::lccn_outlier: return "lccn_outlier";
    case Mode::lccn_semi: return "lccn_semi";
    case Mode::lccn_outlier_semi: return "lccn_outlier_semi";
  }
  return "lccn";
}

bool is_outlier_mode(Mode mode) {
  return mode == Mode::lccn_outlier || mode == Mode::lccn_outlier_semi;
}

bool is_semi_mode(Mode mode) { return mode == Mode::lccn_semi || mode == Mode::lccn_outlier_semi; }

WarmSource parse_warm_source(const std::string& name) {
  if (name == "estimated") return WarmSource::estimated;
  if (name == "identity") return WarmSource::identity;
  if (name == "provided") return WarmSource::provided;
  throw std::invalid_argument("unknown warm transition source '" + name + "'");
}

std::string to_string(WarmSource source) {
  switch (source) {
    case WarmSource::estimated: return "estimated";
    case WarmSource::identity: return "identity";
    case WarmSource::provided: return "provided";
  }
  return "estimated";
}

ResolvedSchedule resolve_schedule(const TrainerConfig& cfg, std::size_t num_classes,
                                  std::size_t num_samples) {
  const auto batch = cfg.harness.train.batch_size;
  if (batch == 0) throw std::invalid_argument("batch size must be positive");
  const auto per_epoch = static_cast<std::int64_t>((num_samples + batch - 1) / batch);
  ResolvedSchedule s;
  s.warmup_steps = cfg.warmup_steps.value_or(per_epoch * (num_classes < 20 ? 1 : 2));
  if (s.warmup_steps < 0) throw std::invalid_argument("warmup_steps must be non-negative");
  s.max_step = cfg.max_step.value_or(
      std::max<std::int64_t>(1, per_epoch * static_cast<std::int64_t>(cfg.harness.epochs)));
  if (s.max_step <= 0) throw std::invalid_argument("max_step must be positive");
  s.warm_source =
      cfg.warm_source.value_or(num_classes < 20 ? WarmSource::estimated : WarmSource::identity);
  return s;
}

nlohmann::json to_json(const TrainerConfig& cfg) {
  auto j = to_json(cfg.harness);
  j["mode"] = to_string(cfg.mode);
  if (cfg.warmup_steps) j["warmup_steps"] = *cfg.warmup_steps;
  if (cfg.max_step) j["max_step"] = *cfg.max_step;
  if (cfg.warm_source) j["warm_source"] = to_string(*cfg.warm_source);
  if (!cfg.warm_transition_path.empty()) j["warm_transition"] = cfg.warm_transition_path;
  j["anneal"] = cfg.sampler.anneal;
  j["anneal_scale"] = cfg.sampler.anneal_scale;
  j["anneal_floor"] = cfg.sampler.anneal_floor;
  j["anneal_placement"] = to_string(cfg.sampler.placement);
  if (!cfg.alpha.empty()) j["alpha"] = cfg.alpha;
  j["audit_safeguard"] = cfg.audit_safeguard;
  return j;
}

TransitionMatrix warmup_transition(const Matrix& predictions, std::span<const std::uint16_t> labels,
                                   std::size_t num_observed, std::vector<std::size_t>* empty_rows) {
  if (predictions.rows() == 0) throw std::invalid_argument("warm-up needs at least one sample");
  if (labels.size() != predictions.rows()) throw std::invalid_argument("one label per prediction");
  const auto latent = predictions.cols();
  TransitionMatrix phi(latent, num_observed);
  std::vector<double> mass(latent, 0.0);
  for (std::size_t t = 0; t < predictions.rows(); ++t) {
    if (labels[t] >= num_observed) throw std::out_of_range("label out of range");
    for (std::size_t i = 0; i < latent; ++i) {
      phi(i, labels[t]) += predictions(t, i);
      mass[i] += predictions(t, i);
    }
  }
  for (std::size_t i = 0; i < latent; ++i) {
    auto row = phi.row(i);
    if (!(mass[i] > 0.0)) {
      std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(num_observed));
      if (empty_rows) empty_rows->push_back(i);
      continue;
    }
    const double denom = std::max(mass[i], 1e-12);
    double total = 0.0;
    for (double& v : row) {
      v /= denom;
      total += v;
    }
    for (double& v : row) v /= total;
  }
  return phi;
}

TransitionMatrix warmup_transition(const Classifier& classifier, const Dataset& data,
                                   std::vector<std::size_t>* empty_rows) {
  if (data.num_samples == 0) throw std::invalid_argument("warm-up needs a non-empty dataset");
  return warmup_transition(classifier.predict_batch(all_features(data)), data.noisy_labels,
                           data.num_classes, empty_rows);
}

double label_correction_ratio(std::span<const std::int32_t> labels, const Dataset& data,
                              bool outlier_mode) {
  if (!data.has_true_labels()) throw std::invalid_argument("correction ratio needs ground truth");
  if (labels.size() != data.num_samples) throw std::invalid_argument("one label per sample");
  if (labels.empty()) throw std::invalid_argument("correction ratio of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] == LatentAssignment::kUnassigned) {
      throw std::invalid_argument("correction ratio before every sample has a label");
    }
    const auto truth = data.true_labels[n];
    if (data.is_outlier(n) && !outlier_mode) continue;
    if (static_cast<std::size_t>(labels[n]) == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

void check_mode(const TrainerConfig& cfg, const Dataset& train) {
  train.validate();
  if (train.num_samples == 0) throw std::invalid_argument("training set is empty");
  if (is_semi_mode(cfg.mode) && !train.has_clean_flags()) {
    throw std::invalid_argument("mode " + to_string(cfg.mode) +
                                " requires clean-label flags in the training data");
  }
  if (train.has_clean_flags() && is_semi_mode(cfg.mode) && !is_outlier_mode(cfg.mode)) {
    for (std::size_t n = 0; n < train.num_samples; ++n) {
      if (train.clean_flags[n] && train.is_outlier(n)) {
        throw std::invalid_argument("clean-flagged outliers need an outlier mode");
      }
    }
  }
}

std::vector<double> resolve_alpha(const TrainerConfig& cfg, std::size_t k) {
  if (cfg.alpha.empty()) return std::vector<double>(k, 1.0);
  if (cfg.alpha.size() != k) {
    throw std::invalid_argument("alpha needs one entry per observed class");
  }
  return cfg.alpha;
}


}  // namespace

RunResult run(const TrainerConfig& cfg, const Dataset& train, const Dataset* test,
              std::uint64_t seed) {
  check_mode(cfg, train);
  const Stopwatch clock(cfg.harness.record_wall_time);
  const bool outlier = is_outlier_mode(cfg.mode);
  const bool semi = is_semi_mode(cfg.mode);
  const auto k = train.num_classes;
  const auto latent = k + (outlier ? 1 : 0);
  const auto alpha = resolve_alpha(cfg, k);
  const auto sched = resolve_schedule(cfg, k, train.num_samples);
  SamplerConfig sampler = cfg.sampler;
  sampler.warmup_steps = sched.warmup_steps;
  sampler.max_step = sched.max_step;

  auto is_clean = [&](std::size_t n) { return semi && train.clean_flags[n] != 0; };
  auto clean_target = [&](std::size_t n) -> std::size_t { return train.true_labels[n]; };
  if (semi && train.num_clean_flagged() > 0 && !train.has_true_labels()) {
    throw std::invalid_argument("clean flags without true labels");
  }

  RunResult result;
  result.classifier = init_classifier(cfg.harness, train.num_features, latent, seed);
  auto& model = *result.classifier;
  auto shuffle = Rng::derive(seed, Stream::shuffle);
  auto sampler_rng = Rng::derive(seed, Stream::sampler);

  // Pretraining sees clean labels for flagged samples, the noisy ones otherwise.
  if (cfg.harness.pretrain_epochs > 0) {
    SgdMomentum opt(model.parameters().size());
    const double lr = cfg.harness.train.schedule.initial_rate();
    std::vector<std::size_t> targets;
    for (std::size_t e = 0; e < cfg.harness.pretrain_epochs; ++e) {
      for (const auto& batch :
           epoch_batches(train.num_samples, cfg.harness.train.batch_size, shuffle)) {
        targets.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const auto n = batch[i];
          targets[i] = is_clean(n) ? clean_target(n) : train.noisy_labels[n];
        }
        train_step(model, opt, gather_features(train, batch), targets, lr, cfg.harness.train);
      }
    }
  }

  std::vector<std::size_t> empty_rows;
  switch (sched.warm_source) {
    case WarmSource::estimated:
      result.warm_transition = warmup_transition(model, train, &empty_rows);
      break;
    case WarmSource::identity:
      result.warm_transition = TransitionMatrix::identity(latent, k);
      break;
    case WarmSource::provided:
      if (cfg.warm_transition_path.empty()) {
        throw std::invalid_argument("provided warm transition needs a path");
      }
      result.warm_transition = read_transition_csv(cfg.warm_transition_path);
      if (result.warm_transition.num_latent() != latent ||
          result.warm_transition.num_observed() != k) {
        throw std::invalid_argument("provided warm transition has the wrong shape");
      }
      break;
  }

  result.report.run_id = to_string(cfg.mode) + "-seed" + std::to_string(seed);
  auto& header = result.report.header;
  header["method"] = to_string(cfg.mode);
  header["seed"] = seed;
  header["config"] = to_json(cfg);
  header["resolved"] = {{"warmup_steps", sched.warmup_steps},
                        {"max_step", sched.max_step},
                        {"warm_source", to_string(sched.warm_source)}};
  header["data"] = {{"num_samples", train.num_samples},
                    {"num_features", train.num_features},
                    {"num_classes", k},
                    {"clean_flagged", semi ? train.num_clean_flagged() : 0}};
  if (!empty_rows.empty()) header["warm_empty_rows"] = empty_rows;

  NoiseModel counts(latent, k, alpha);
  result.assignment = LatentAssignment(train.num_samples);

  if (cfg.harness.epochs == 0) {
    result.transition = result.warm_transition;
    return result;
  }

  const bool truth = train.has_true_labels();
  const auto truth_phi = truth ? std::optional(true_transition(train)) : std::nullopt;
  const double xi = cfg.harness.train.clip_epsilon;
  SgdMomentum opt(model.parameters().size());
  UpdateWindow window(cfg.harness.update_window);
  std::vector<std::int32_t> targets_all(train.num_samples, LatentAssignment::kUnassigned);
  for (std::size_t n = 0; n < train.num_samples; ++n) {
    if (is_clean(n)) targets_all[n] = static_cast<std::int32_t>(clean_target(n));
  }

  std::int64_t step = 0;
  std::vector<std::size_t> sub_batch;
  std::vector<std::size_t> sub_rows;
  std::vector<std::size_t> targets;
  for (std::size_t epoch = 0; epoch < cfg.harness.epochs; ++epoch) {
    const double lr = cfg.harness.train.schedule.rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    double epoch_max_change = 0.0;
    double epoch_bound_max = 0.0;
    for (const auto& batch :
         epoch_batches(train.num_samples, cfg.harness.train.batch_size, shuffle)) {
      const auto x = gather_features(train, batch);
      auto pred = model.predict_batch(x);
      for (double& p : pred.data()) {
        p = std::max(p, xi);
      }

      sub_batch.clear();
      sub_rows.clear();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (is_clean(batch[i])) continue;
        sub_batch.push_back(batch[i]);
        sub_rows.push_back(i);
      }
      if (!sub_batch.empty()) {
        Matrix sub_pred(sub_rows.size(), latent);
        for (std::size_t r = 0; r < sub_rows.size(); ++r) {
          std::copy_n(pred.row(sub_rows[r]).begin(), latent, sub_pred.row(r).begin());
        }
        const NoiseModel before = counts;
        const auto tally = gibbs_batch(sub_batch, sub_pred, train.noisy_labels, result.assignment,
                                       counts, step, &result.warm_transition, sampler,
                                       sampler_rng);
        auto audit = audit_update(before, counts, tally.net, tally.moved);
        if (cfg.audit_safeguard && !audit.pass) {
          throw SafeguardViolation("safeguard bound violated at step " + std::to_string(step));
        }
        BatchUpdate update;
        update.step = step;
        update.epoch = epoch;
        update.warming = step < sched.warmup_steps;
        update.changes = std::move(audit.changes);
        update.bounds = std::move(audit.bounds);
        update.row_counts.resize(latent);
        for (std::size_t r = 0; r < latent; ++r) update.row_counts[r] = before.row_total(r);
        const double max_change = update.max_change();
        const double max_bound = *std::max_element(update.bounds.begin(), update.bounds.end());
        epoch_max_change = std::max(epoch_max_change, max_change);
        epoch_bound_max = std::max(epoch_bound_max, max_bound);
        if (window.add(max_change, max_bound)) {
          ReportRecord rec;
          rec.type = "updates";
          rec.epoch = epoch;
          rec.step = step + 1;
          rec.update_magnitudes = window.take(rec.safeguard_bound_max);
          rec.max_update_magnitude =
              *std::max_element(rec.update_magnitudes.begin(), rec.update_magnitudes.end());
          result.report.records.push_back(std::move(rec));
        }
        result.updates.push_back(std::move(update));
        for (auto n : sub_batch) targets_all[n] = result.assignment[n];
      }

      targets.resize(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        targets[i] = static_cast<std::size_t>(targets_all[batch[i]]);
      }
      loss_sum += train_step(model, opt, x, targets, lr, cfg.harness.train);
      ++batches;
      ++step;
    }

    ReportRecord rec;
    rec.type = "epoch";
    rec.epoch = epoch;
    rec.step = step;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    if (test) {
      rec.test_accuracy = evaluate(model, *test);
      result.test_accuracy_per_epoch.push_back(*rec.test_accuracy);
    }
    if (truth) {
      rec.correction_ratio = label_correction_ratio(targets_all, train, outlier);
      if (epoch == 0) result.initial_correction_ratio = rec.correction_ratio;
      result.final_correction_ratio = rec.correction_ratio;
      rec.transition_l1_per_row = transition_error(counts.transition_matrix(), *truth_phi).per_row;
    }
    rec.max_update_magnitude = epoch_max_change;
    rec.safeguard_bound_max = epoch_bound_max;
    rec.wall_time_ms = clock.elapsed_ms();
    result.report.records.push_back(std::move(rec));
  }

  double bound_max = 0.0;
  auto rest = window.take(bound_max);
  if (!rest.empty()) {
    ReportRecord rec;
    rec.type = "updates";
    rec.epoch = cfg.harness.epochs - 1;
    rec.step = step;
    rec.max_update_magnitude = *std::max_element(rest.begin(), rest.end());
    rec.update_magnitudes = std::move(rest);
    rec.safeguard_bound_max = bound_max;
    result.report.records.push_back(std::move(rec));
  }
  result.transition = counts.transition_matrix();
  return result;
}

}  // namespace lccn
