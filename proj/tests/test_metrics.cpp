#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "lccn/metrics.hpp"

using namespace lccn;

namespace {

RunReport sample_report(const std::string& id, double acc) {
  RunReport r;
  r.run_id = id;
  r.header = {{"seed", 1}, {"config", {{"epochs", 2}}}};
  for (std::size_t e = 0; e < 2; ++e) {
    ReportRecord rec;
    rec.epoch = e;
    rec.step = static_cast<std::int64_t>(10 * (e + 1));
    rec.train_loss = 0.5 / (e + 1);
    rec.test_accuracy = acc;
    rec.correction_ratio = 0.9;
    rec.transition_l1_per_row = {0.01, 0.02};
    rec.max_update_magnitude = 0.003;
    rec.safeguard_bound_max = 0.01;
    r.records.push_back(rec);
  }
  ReportRecord upd;
  upd.type = "updates";
  upd.step = 15;
  upd.update_magnitudes = {0.001, 0.002, 0.003};
  r.records.push_back(upd);
  return r;
}

}  // namespace

TEST_CASE("transition error") {
  const auto id = TransitionMatrix::identity(2, 2);
  const auto zero = transition_error(id, id);
  CHECK(zero.per_row == std::vector<double>{0.0, 0.0});
  CHECK(zero.mean == 0.0);
  CHECK(zero.frobenius == 0.0);

  const auto uni = TransitionMatrix::uniform(2, 2);
  const auto e = transition_error(uni, id);
  CHECK(e.per_row[0] == doctest::Approx(1.0));
  CHECK(e.per_row[1] == doctest::Approx(1.0));
  CHECK(e.mean == doctest::Approx(1.0));
  CHECK(e.frobenius == doctest::Approx(1.0));

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    TransitionMatrix a(3, 3);
    TransitionMatrix b(3, 3);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t j = 0; j < 3; ++j) {
        a(k, j) = rng.uniform();
        b(k, j) = rng.uniform();
      }
    }
    CHECK(transition_error(a, b).per_row == transition_error(b, a).per_row);
    CHECK(transition_error(a, b).mean > 0.0);
  }

  // Outlier row only on the learned side is skipped.
  TransitionMatrix learned(3, 2, 0.5);
  CHECK(transition_error(learned, TransitionMatrix::uniform(2, 2)).per_row.size() == 2);
}

TEST_CASE("histogram") {
  const std::vector<double> edges = {0.0, 0.5, 1.0};
  const std::vector<double> none;
  CHECK(histogram(none, edges) == std::vector<std::size_t>{0, 0, 0, 0});
  const std::vector<double> values = {-1.0, 0.0, 0.25, 0.5, 0.75, 1.0, 2.0};
  CHECK(histogram(values, edges) == std::vector<std::size_t>{1, 2, 2, 2});

  std::ostringstream out;
  const auto counts = histogram(values, edges);
  write_histogram_csv(out, edges, counts);
  CHECK(out.str() == "edge_lo,edge_hi,count\n-inf,0,1\n0,0.5,2\n0.5,1,2\n1,inf,2\n");
}

TEST_CASE("report round trip") {
  const auto report = sample_report("lccn-seed1", 0.8);
  std::stringstream io;
  emit_report(io, report);
  const auto loaded = load_reports(io);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == report);
  CHECK(loaded[0].last_epoch()->epoch == 1);
  CHECK(loaded[0].of_type("updates").size() == 1);
}

TEST_CASE("concatenated reports are split by header") {
  std::stringstream io;
  emit_report(io, sample_report("a", 0.8));
  emit_report(io, sample_report("b", 0.9));
  const auto loaded = load_reports(io);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].run_id == "a");
  CHECK(loaded[1].run_id == "b");
  CHECK(*loaded[1].last_epoch()->test_accuracy == 0.9);
}

TEST_CASE("non-finite values are rejected") {
  auto bad = sample_report("x", 0.8);
  bad.records[0].train_loss = std::numeric_limits<double>::quiet_NaN();
  std::stringstream sink;
  CHECK_THROWS(emit_report(sink, bad));

  std::stringstream text;
  emit_report(text, sample_report("x", 0.8));
  auto s = text.str();
  const auto pos = s.find("\"loss\":");
  REQUIRE(pos != std::string::npos);
  s.replace(pos, 7, "\"loss\":NaN,\"ignored\":");
  std::istringstream in(s);
  CHECK_THROWS_AS(load_reports(in), std::runtime_error);
}

TEST_CASE("aggregate") {
  const std::vector<std::map<std::string, double>> same = {{{"acc", 0.7}}, {{"acc", 0.7}}, {{"acc", 0.7}}};
  const auto s = aggregate(same);
  CHECK(s.at("acc").mean == 0.7);
  CHECK(s.at("acc").stddev == 0.0);
  CHECK(s.at("acc").count == 3);

  const std::vector<std::map<std::string, double>> spread = {{{"acc", 1.0}}, {{"acc", 3.0}}};
  const auto t = aggregate(spread);
  CHECK(t.at("acc").mean == 2.0);
  CHECK(t.at("acc").stddev == doctest::Approx(std::sqrt(2.0)));
}
