#include "lccn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace lccn {

using nlohmann::json;

TransitionError transition_error(const TransitionMatrix& learned, const TransitionMatrix& truth) {
  if (learned.num_observed() != truth.num_observed()) {
    throw std::invalid_argument("transition matrices disagree on observed classes");
  }
  const auto k = learned.num_observed();
  const auto rows = std::min(learned.num_latent(), truth.num_latent());
  if (std::max(learned.num_latent(), truth.num_latent()) > k + 1 || rows < k) {
    throw std::invalid_argument("transition matrices have incompatible latent rows");
  }
  TransitionError err;
  err.per_row.resize(rows);
  double sq = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double diff = learned(i, j) - truth(i, j);
      l1 += std::abs(diff);
      sq += diff * diff;
    }
    err.per_row[i] = l1;
    err.mean += l1;
  }
  err.mean /= static_cast<double>(rows);
  err.frobenius = std::sqrt(sq);
  return err;
}

std::vector<std::size_t> histogram(std::span<const double> values, std::span<const double> edges) {
  if (edges.empty()) throw std::invalid_argument("histogram needs at least one edge");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("histogram edges must increase");
  }
  std::vector<std::size_t> counts(edges.size() + 1, 0);
  for (double v : values) {
    // number of edges <= v is exactly the left-closed bin index
    const auto bin = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
    ++counts[static_cast<std::size_t>(bin)];
  }
  return counts;
}

void write_histogram_csv(std::ostream& out, std::span<const double> edges,
                         std::span<const std::size_t> counts) {
  if (counts.size() != edges.size() + 1) throw std::invalid_argument("histogram shape mismatch");
  out << "edge_lo,edge_hi,count\n";
  char lo[32];
  char hi[32];
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (b == 0) std::snprintf(lo, sizeof(lo), "-inf");
    else std::snprintf(lo, sizeof(lo), "%.17g", edges[b - 1]);
    if (b == edges.size()) std::snprintf(hi, sizeof(hi), "inf");
    else std::snprintf(hi, sizeof(hi), "%.17g", edges[b]);
    out << lo << ',' << hi << ',' << counts[b] << '\n';
  }
}

std::vector<const ReportRecord*> RunReport::of_type(const std::string& type) const {
  std::vector<const ReportRecord*> out;
  for (const auto& r : records) {
    if (r.type == type) out.push_back(&r);
  }
  return out;
}

const ReportRecord* RunReport::last_epoch() const {
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (it->type == "epoch") return &*it;
  }
  return nullptr;
}

namespace {

void require_finite(double v, const char* field) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite report value: ") + field);
}

double finite_number(const json& j, const char* field) {
  if (!j.contains(field)) throw std::runtime_error(std::string("missing field ") + field);
  const auto& v = j.at(field);
  if (!v.is_number()) throw std::runtime_error(std::string("field ") + field + " is not a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw std::runtime_error(std::string("field ") + field + " is not finite");
  return d;
}

std::vector<double> finite_array(const json& j, const char* field) {
  std::vector<double> out;
  if (!j.contains(field)) return out;
  const auto& arr = j.at(field);
  if (!arr.is_array()) throw std::runtime_error(std::string("field ") + field + " is not an array");
  for (const auto& v : arr) {
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      throw std::runtime_error(std::string("field ") + field + " holds a non-finite entry");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

json to_json(const ReportRecord& r) {
  require_finite(r.train_loss, "train_loss");
  require_finite(r.max_update_magnitude, "max_update_magnitude");
  require_finite(r.safeguard_bound_max, "safeguard_bound_max");
  require_finite(r.wall_time_ms, "wall_time_ms");
  json j;
  j["type"] = r.type;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  if (r.type == "epoch") {
    j["loss"] = r.train_loss;
    if (r.test_accuracy) {
      require_finite(*r.test_accuracy, "test_accuracy");
      j["test_accuracy"] = *r.test_accuracy;
    }
    if (r.correction_ratio) {
      require_finite(*r.correction_ratio, "correction_ratio");
      j["correction_ratio"] = *r.correction_ratio;
    }
    for (double v : r.transition_l1_per_row) require_finite(v, "transition_l1_per_row");
    j["transition_l1_per_row"] = r.transition_l1_per_row;
    j["wall_time_ms"] = r.wall_time_ms;
  } else {
    for (double v : r.update_magnitudes) require_finite(v, "update_magnitudes");
    j["update_magnitudes"] = r.update_magnitudes;
  }
  j["max_update_magnitude"] = r.max_update_magnitude;
  j["safeguard_bound"] = r.safeguard_bound_max;
  return j;
}

ReportRecord record_from_json(const json& j) {
  ReportRecord r;
  r.type = j.at("type").get<std::string>();
  if (r.type != "epoch" && r.type != "updates") throw std::runtime_error("unknown record type " + r.type);
  r.epoch = j.at("epoch").get<std::size_t>();
  r.step = j.at("step").get<std::int64_t>();
  if (r.type == "epoch") {
    r.train_loss = finite_number(j, "loss");
    if (j.contains("test_accuracy")) r.test_accuracy = finite_number(j, "test_accuracy");
    if (j.contains("correction_ratio")) r.correction_ratio = finite_number(j, "correction_ratio");
    r.transition_l1_per_row = finite_array(j, "transition_l1_per_row");
    r.wall_time_ms = finite_number(j, "wall_time_ms");
  } else {
    r.update_magnitudes = finite_array(j, "update_magnitudes");
  }
  r.max_update_magnitude = finite_number(j, "max_update_magnitude");
  r.safeguard_bound_max = finite_number(j, "safeguard_bound");
  return r;
}

void emit_report(std::ostream& out, const RunReport& report) {
  json head;
  head["type"] = "header";
  head["run_id"] = report.run_id;
  head["header"] = report.header;
  std::string lines = head.dump() + '\n';
  for (const auto& r : report.records) lines += to_json(r).dump() + '\n';
  out << lines;
}

void emit_report(const std::string& path, const RunReport& report, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  emit_report(out, report);
}

std::vector<RunReport> load_reports(std::istream& in) {
  std::vector<RunReport> reports;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::int64_t> last_step;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        RunReport report;
        report.run_id = j.at("run_id").get<std::string>();
        report.header = j.value("header", json::object());
        reports.push_back(std::move(report));
        last_step.clear();
        continue;
      }
      if (reports.empty()) throw std::runtime_error("record before any header");
      auto record = record_from_json(j);
      auto it = last_step.find(record.type);
      if (it != last_step.end() && record.step <= it->second) {
        throw std::runtime_error("steps must strictly increase");
      }
      last_step[record.type] = record.step;
      reports.back().records.push_back(std::move(record));
    } catch (const std::exception& e) {
      throw std::runtime_error("report line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return reports;
}

std::vector<RunReport> load_reports(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path);
  return load_reports(in);
}

RunReport load_report(const std::string& path) {
  auto reports = load_reports(path);
  if (reports.size() != 1) {
    throw std::runtime_error("expected one report in " + path + ", found " +
                             std::to_string(reports.size()));
  }
  return std::move(reports.front());
}

std::map<std::string, MetricSummary> aggregate(
    const std::vector<std::map<std::string, double>>& runs) {
  std::map<std::string, std::vector<double>> columns;
  for (const auto& run : runs) {
    for (const auto& [name, value] : run) columns[name].push_back(value);
  }
  std::map<std::string, MetricSummary> out;
  for (const auto& [name, values] : columns) {
    if (values.size() != runs.size()) {
      throw std::invalid_argument("metric " + name + " missing from some runs");
    }
    MetricSummary s;
    s.count = values.size();
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
      s.mean = values.front();
      out[name] = s;
      continue;
    }
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    out[name] = s;
  }
  return out;
}

}  // namespace lccn
