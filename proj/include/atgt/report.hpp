#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::report {

// One evaluated instance; the label is kept for per-class aggregation and the
// plot but is not a CSV column.
struct InstanceRow {
  std::string id;
  int label = 0;
  double attr_fc = 0.0;
  double attr_fn = 0.0;
  double er_pct = 0.0;  // |F_C| as a fraction of the instance's features
  double precision = 0.0;
  double recall = 0.0;
};

// Attr% over F_C and F_N, the F_C feature fraction, and precision/recall of
// the |F_C|-sized top-k selection. truth.f_c must be non-empty and the map
// must belong to the instance.
InstanceRow build_row(const Instance& inst, const AttributionMap& attr,
                      const GroundTruthSpec& truth);

struct ClassSummary {
  int label = 0;
  uint64_t count = 0;
  double attr_fc_mean = 0.0, attr_fc_stdev = 0.0;
  double attr_fn_mean = 0.0, attr_fn_stdev = 0.0;
  double er_pct_mean = 0.0;
  double precision_mean = 0.0;
  double recall_mean = 0.0;
};

struct EnvelopeVerdict {
  std::string name;
  double bound = 0.0;
  double observed = 0.0;
  bool pass = false;
};

struct EvaluationReport {
  std::vector<InstanceRow> rows;
  std::vector<ClassSummary> classes;       // rebuilt by summarize()
  std::vector<EnvelopeVerdict> verdicts;
  std::vector<std::string> missing_ids;    // instances lacking a map, excluded
  std::vector<std::string> unmatched_ids;  // maps lacking an instance
  double p_star = 1.0;
  std::optional<double> model_accuracy;
  std::optional<uint64_t> accuracy_count;
  std::optional<double> significance;
};

// Sorts rows by id and rebuilds the per-class summaries. Standard deviations
// use the n-1 denominator and are zero for classes with fewer than two rows.
void summarize(EvaluationReport& rep);

// One row per instance: id,attr_fc,attr_fn,er_pct,precision,recall.
std::string to_csv(const EvaluationReport& rep);

// Aggregate block: version, resolved config echo (JSON text; empty embeds
// null), per-class summaries, envelope verdicts, exclusions.
std::string to_json(const EvaluationReport& rep, const std::string& resolved_config);

// Self-contained scatter of Attr% over F_C against the F_C fraction, with the
// y=x random-map diagonal, the y=1 line, and the CSV embedded as a comment so
// plots stay diffable against their data.
std::string to_svg(const EvaluationReport& rep);

}  // namespace atgt::report
