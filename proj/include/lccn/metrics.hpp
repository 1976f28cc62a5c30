#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lccn/noise_model.hpp"

namespace lccn {

struct TransitionError {
  std::vector<double> per_row;  // L1 distance of each compared row, in [0, 2]
  double mean = 0.0;
  double frobenius = 0.0;
};

// Compares the rows both matrices share; an outlier row present on only one
// side is skipped.
TransitionError transition_error(const TransitionMatrix& learned, const TransitionMatrix& truth);

// Left-closed bins [edges[i], edges[i+1]). counts[0] is the underflow bin,
// counts.back() the overflow bin (which includes values equal to the last
// edge), so counts.size() == edges.size() + 1.
std::vector<std::size_t> histogram(std::span<const double> values, std::span<const double> edges);

// Rows: edge_lo,edge_hi,count with -inf/inf for the open ends.
void write_histogram_csv(std::ostream& out, std::span<const double> edges,
                         std::span<const std::size_t> counts);

// One line of a run report. "epoch" records summarize an epoch; "updates"
// records carry the per-batch transition change magnitudes of a window of
// batches. Steps strictly increase within each record type.
struct ReportRecord {
  std::string type = "epoch";
  std::size_t epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> test_accuracy;
  std::optional<double> correction_ratio;
  std::vector<double> transition_l1_per_row;
  double max_update_magnitude = 0.0;
  double safeguard_bound_max = 0.0;
  double wall_time_ms = 0.0;
  std::vector<double> update_magnitudes;

  friend bool operator==(const ReportRecord&, const ReportRecord&) = default;
};

struct RunReport {
  std::string run_id;
  nlohmann::json header = nlohmann::json::object();  // config and seed
  std::vector<ReportRecord> records;

  std::vector<const ReportRecord*> of_type(const std::string& type) const;
  const ReportRecord* last_epoch() const;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

nlohmann::json to_json(const ReportRecord& record);
ReportRecord record_from_json(const nlohmann::json& j);

// JSON lines: a header line {"type":"header","run_id":...,"header":{...}}
// followed by one line per record. Throws on non-finite values.
void emit_report(std::ostream& out, const RunReport& report);
void emit_report(const std::string& path, const RunReport& report, bool append = false);

// Splits concatenated reports at their header lines. Throws
// std::runtime_error naming the line on malformed input.
std::vector<RunReport> load_reports(std::istream& in);
std::vector<RunReport> load_reports(const std::string& path);
// Exactly one report expected.
RunReport load_report(const std::string& path);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1)
  std::size_t count = 0;
};

// Per-metric mean and standard deviation across runs.
std::map<std::string, MetricSummary> aggregate(
    const std::vector<std::map<std::string, double>>& runs);

}  // namespace lccn
