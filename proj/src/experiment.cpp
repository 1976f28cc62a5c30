#include "lccn/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

namespace lccn {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

bool is_lccn_mode(const std::string& name) {
  return name == "lccn" || name == "lccn_outlier" || name == "lccn_semi" ||
         name == "lccn_outlier_semi";
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_key_values(in, path);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "method",          "epochs",         "pretrain_epochs",     "lr_schedule",
      "momentum",        "weight_decay",   "batch_size",          "clip_epsilon",
      "model",           "hidden",         "update_window",       "record_wall_time",
      "warmup_steps",    "max_step",       "warm_source",         "warm_transition",
      "anneal",          "anneal_scale",   "anneal_floor",        "anneal_placement",
      "alpha",           "audit_safeguard", "beta",               "forward_source",
      "transition",      "s_adapt_warmup_steps", "transition_lr_scale"};
  return keys;
}

std::string RunConfig::method_name() const {
  return is_lccn ? to_string(trainer.mode) : to_string(baseline.method);
}

RunConfig build_run_config(const KeyValues& values) {
  const auto& keys = config_keys();
  for (const auto& [key, value] : values) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };

  RunConfig cfg;
  HarnessConfig harness;
  try {
    if (auto v = get("epochs")) harness.epochs = parse_number<std::size_t>("epochs", *v);
    if (auto v = get("pretrain_epochs")) {
      harness.pretrain_epochs = parse_number<std::size_t>("pretrain_epochs", *v);
    }
    if (auto v = get("lr_schedule")) harness.train.schedule = LearningRateSchedule::parse(*v);
    if (auto v = get("momentum")) harness.train.momentum = parse_number<double>("momentum", *v);
    if (auto v = get("weight_decay")) {
      harness.train.weight_decay = parse_number<double>("weight_decay", *v);
    }
    if (auto v = get("batch_size")) {
      harness.train.batch_size = parse_number<std::size_t>("batch_size", *v);
      if (harness.train.batch_size == 0) throw ConfigError("batch_size must be positive");
    }
    if (auto v = get("clip_epsilon")) {
      harness.train.clip_epsilon = parse_number<double>("clip_epsilon", *v);
      if (!(harness.train.clip_epsilon > 0.0 && harness.train.clip_epsilon < 0.5)) {
        throw ConfigError("clip_epsilon must lie in (0, 0.5)");
      }
    }
    if (auto v = get("model")) harness.model.kind = parse_model_kind(*v);
    if (auto v = get("hidden")) harness.model.hidden = parse_number<std::size_t>("hidden", *v);
    if (auto v = get("update_window")) {
      harness.update_window = parse_number<std::size_t>("update_window", *v);
      if (harness.update_window == 0) throw ConfigError("update_window must be positive");
    }
    if (auto v = get("record_wall_time")) harness.record_wall_time = parse_bool("record_wall_time", *v);

    const std::string method = get("method") ? *get("method") : "lccn";
    cfg.is_lccn = is_lccn_mode(method);
    if (cfg.is_lccn) {
      auto& t = cfg.trainer;
      t.mode = parse_mode(method);
      t.harness = harness;
      if (auto v = get("warmup_steps")) t.warmup_steps = parse_number<std::int64_t>("warmup_steps", *v);
      if (auto v = get("max_step")) t.max_step = parse_number<std::int64_t>("max_step", *v);
      if (auto v = get("warm_source")) t.warm_source = parse_warm_source(*v);
      if (auto v = get("warm_transition")) {
        t.warm_transition_path = *v;
        if (!t.warm_source) t.warm_source = WarmSource::provided;
      }
      if (t.warm_source == WarmSource::provided && t.warm_transition_path.empty()) {
        throw ConfigError("warm_source = provided needs warm_transition");
      }
      if (auto v = get("anneal")) t.sampler.anneal = parse_bool("anneal", *v);
      if (auto v = get("anneal_scale")) t.sampler.anneal_scale = parse_number<double>("anneal_scale", *v);
      if (auto v = get("anneal_floor")) t.sampler.anneal_floor = parse_number<double>("anneal_floor", *v);
      if (auto v = get("anneal_placement")) t.sampler.placement = parse_anneal_placement(*v);
      if (auto v = get("alpha")) t.alpha = parse_list("alpha", *v);
      if (auto v = get("audit_safeguard")) t.audit_safeguard = parse_bool("audit_safeguard", *v);
    } else {
      auto& b = cfg.baseline;
      b.method = parse_baseline_method(method);
      b.harness = harness;
      if (auto v = get("beta")) b.beta = parse_number<double>("beta", *v);
      if (!(b.beta >= 0.0 && b.beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
      if (auto v = get("forward_source")) b.forward_source = parse_forward_source(*v);
      if (auto v = get("transition")) {
        b.transition_path = *v;
        if (!get("forward_source")) b.forward_source = ForwardSource::file;
      }
      if (b.forward_source == ForwardSource::file && b.method == BaselineMethod::forward &&
          b.transition_path.empty()) {
        throw ConfigError("forward_source = file needs transition");
      }
      if (auto v = get("s_adapt_warmup_steps")) {
        b.s_adapt_warmup_steps = parse_number<std::int64_t>("s_adapt_warmup_steps", *v);
      }
      if (auto v = get("transition_lr_scale")) {
        b.transition_lr_scale = parse_number<double>("transition_lr_scale", *v);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunOutcome execute(const RunConfig& cfg, const Dataset& train, const Dataset* test,
                   std::uint64_t seed) {
  RunOutcome out;
  if (cfg.is_lccn) {
    auto r = run(cfg.trainer, train, test, seed);
    out.classifier = std::move(r.classifier);
    out.transition = std::move(r.transition);
    out.report = std::move(r.report);
    out.updates = std::move(r.updates);
    out.assignment = std::move(r.assignment);
    out.initial_correction_ratio = r.initial_correction_ratio;
    out.final_correction_ratio = r.final_correction_ratio;
  } else {
    auto r = run_baseline(cfg.baseline, train, test, seed);
    out.classifier = std::move(r.classifier);
    out.transition = std::move(r.transition);
    out.report = std::move(r.report);
    out.updates = std::move(r.updates);
  }
  return out;
}

std::map<std::string, double> summarize(const RunOutcome& outcome) {
  std::map<std::string, double> m;
  if (const auto* last = outcome.report.last_epoch()) {
    if (last->test_accuracy) m["test_accuracy"] = *last->test_accuracy;
    if (last->correction_ratio) m["correction_ratio"] = *last->correction_ratio;
    if (!last->transition_l1_per_row.empty()) {
      const auto& rows = last->transition_l1_per_row;
      m["transition_l1_mean"] =
          std::accumulate(rows.begin(), rows.end(), 0.0) / static_cast<double>(rows.size());
    }
    m["train_loss"] = last->train_loss;
  }
  double max_change = 0.0;
  double max_bound = 0.0;
  for (const auto& u : outcome.updates) {
    max_change = std::max(max_change, u.max_change());
    for (double b : u.bounds) max_bound = std::max(max_bound, b);
  }
  if (!outcome.updates.empty()) {
    m["max_update"] = max_change;
    if (!outcome.updates.front().bounds.empty()) m["max_bound"] = max_bound;
  }
  return m;
}

}  // namespace lccn
