#include "atgt/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "atgt/errors.hpp"
#include "atgt/metrics.hpp"
#include "atgt/util.hpp"
#include "json.hpp"

namespace atgt::report {

namespace {

// Report ids land in CSV fields and XML comments unescaped.
void check_id(const std::string& id) {
  if (id.empty()) throw ValidationError("report row id is empty");
  for (char c : id) {
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      throw ValidationError("report row id '" + id + "' contains CSV delimiters");
    }
  }
  if (id.find("--") != std::string::npos) {
    throw ValidationError("report row id '" + id + "' cannot be embedded in an SVG comment");
  }
}

struct Moments {
  double mean = 0.0;
  double stdev = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) m.mean += x;
  m.mean /= n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.stdev = std::sqrt(ss / (n - 1.0));
  }
  return m;
}

std::string csv_line(const InstanceRow& r) {
  std::string line = r.id;
  line += ',';
  line += fmt_double(r.attr_fc);
  line += ',';
  line += fmt_double(r.attr_fn);
  line += ',';
  line += fmt_double(r.er_pct);
  line += ',';
  line += fmt_double(r.precision);
  line += ',';
  line += fmt_double(r.recall);
  line += '\n';
  return line;
}

}  // namespace

InstanceRow build_row(const Instance& inst, const AttributionMap& attr,
                      const GroundTruthSpec& truth) {
  if (attr.instance_id != inst.id) {
    throw ValidationError("attribution map '" + attr.instance_id +
                          "' does not belong to instance '" + inst.id + "'");
  }
  truth.validate();
  if (truth.f_c.empty()) {
    throw ValidationError("ground-truth F_C is empty for instance '" + inst.id + "'");
  }
  check_id(inst.id);

  InstanceRow row;
  row.id = inst.id;
  row.label = inst.y_hat;
  row.attr_fc = metrics::attr_percent(attr, truth.f_c);
  row.attr_fn = metrics::attr_percent(attr, truth.f_n);
  row.er_pct = metrics::er_percent(truth.f_c, inst.shape.feature_count());
  const FeatureSet picked = metrics::topk_select(attr, truth.f_c.size());
  const metrics::PrecisionRecall pr = metrics::precision_recall(picked, truth.f_c);
  row.precision = pr.precision;
  row.recall = pr.recall;
  return row;
}

void summarize(EvaluationReport& rep) {
  std::sort(rep.rows.begin(), rep.rows.end(),
            [](const InstanceRow& a, const InstanceRow& b) { return a.id < b.id; });
  rep.classes.clear();

  std::map<int, std::vector<const InstanceRow*>> by_label;
  for (const InstanceRow& row : rep.rows) by_label[row.label].push_back(&row);

  for (const auto& [label, rows] : by_label) {
    const auto collect = [&](double InstanceRow::* field) {
      std::vector<double> xs;
      xs.reserve(rows.size());
      for (const InstanceRow* r : rows) xs.push_back(r->*field);
      return xs;
    };
    ClassSummary cs;
    cs.label = label;
    cs.count = rows.size();
    const Moments fc = moments(collect(&InstanceRow::attr_fc));
    const Moments fn = moments(collect(&InstanceRow::attr_fn));
    cs.attr_fc_mean = fc.mean;
    cs.attr_fc_stdev = fc.stdev;
    cs.attr_fn_mean = fn.mean;
    cs.attr_fn_stdev = fn.stdev;
    cs.er_pct_mean = moments(collect(&InstanceRow::er_pct)).mean;
    cs.precision_mean = moments(collect(&InstanceRow::precision)).mean;
    cs.recall_mean = moments(collect(&InstanceRow::recall)).mean;
    rep.classes.push_back(cs);
  }
}

std::string to_csv(const EvaluationReport& rep) {
  std::string out = "id,attr_fc,attr_fn,er_pct,precision,recall\n";
  for (const InstanceRow& row : rep.rows) {
    check_id(row.id);
    out += csv_line(row);
  }
  return out;
}

std::string to_json(const EvaluationReport& rep, const std::string& resolved_config) {
  nlohmann::ordered_json j;
  j["version"] = version();
  if (resolved_config.empty()) {
    j["config"] = nullptr;
  } else {
    try {
      j["config"] = nlohmann::ordered_json::parse(resolved_config);
    } catch (const nlohmann::json::parse_error&) {
      throw ValidationError("resolved config echo is not valid JSON");
    }
  }
  j["p_star"] = rep.p_star;
  j["instances"] = rep.rows.size();
  j["excluded_missing"] = rep.missing_ids;
  j["unmatched_attributions"] = rep.unmatched_ids;
  j["model_accuracy"] =
      rep.model_accuracy ? nlohmann::ordered_json(*rep.model_accuracy) : nullptr;
  j["accuracy_count"] =
      rep.accuracy_count ? nlohmann::ordered_json(*rep.accuracy_count) : nullptr;
  j["significance"] = rep.significance ? nlohmann::ordered_json(*rep.significance) : nullptr;

  nlohmann::ordered_json classes = nlohmann::ordered_json::array();
  for (const ClassSummary& cs : rep.classes) {
    classes.push_back({
        {"label", cs.label},
        {"count", cs.count},
        {"attr_fc_mean", cs.attr_fc_mean},
        {"attr_fc_stdev", cs.attr_fc_stdev},
        {"attr_fn_mean", cs.attr_fn_mean},
        {"attr_fn_stdev", cs.attr_fn_stdev},
        {"er_pct_mean", cs.er_pct_mean},
        {"precision_mean", cs.precision_mean},
        {"recall_mean", cs.recall_mean},
    });
  }
  j["classes"] = std::move(classes);

  nlohmann::ordered_json envs = nlohmann::ordered_json::array();
  for (const EnvelopeVerdict& v : rep.verdicts) {
    envs.push_back({
        {"name", v.name},
        {"bound", v.bound},
        {"observed", v.observed},
        {"pass", v.pass},
    });
  }
  j["envelopes"] = std::move(envs);
  return j.dump(2) + "\n";
}

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 24.0, kTop = 24.0, kBottom = 56.0;

double px(double x) { return kLeft + x * (kWidth - kLeft - kRight); }
double py(double y) { return kHeight - kBottom - y * (kHeight - kTop - kBottom); }

const char* point_color(int label) {
  static const char* kPalette[6] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                    "#9467bd", "#8c564b", "#17becf"};
  const int idx = label >= 0 ? label % 6 : (6 - (-label % 6)) % 6;
  return kPalette[idx];
}

void line(std::string& s, double x1, double y1, double x2, double y2,
          const std::string& style) {
  s += "  <line x1=\"" + fmt_double(x1) + "\" y1=\"" + fmt_double(y1) + "\" x2=\"" +
       fmt_double(x2) + "\" y2=\"" + fmt_double(y2) + "\" " + style + "/>\n";
}

void text(std::string& s, double x, double y, const std::string& content,
          const std::string& attrs) {
  s += "  <text x=\"" + fmt_double(x) + "\" y=\"" + fmt_double(y) + "\" " + attrs + ">" +
       content + "</text>\n";
}

}  // namespace

std::string to_svg(const EvaluationReport& rep) {
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_double(kWidth) +
       "\" height=\"" + fmt_double(kHeight) + "\" viewBox=\"0 0 " + fmt_double(kWidth) +
       " " + fmt_double(kHeight) + "\" font-family=\"monospace\" font-size=\"12\">\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"" + fmt_double(kWidth) + "\" height=\"" +
       fmt_double(kHeight) + "\" fill=\"#ffffff\"/>\n";

  // Grid and tick labels on both unit axes.
  for (int i = 0; i <= 4; ++i) {
    const double v = 0.25 * i;
    line(s, px(v), py(0.0), px(v), py(1.0), "stroke=\"#dddddd\" stroke-width=\"1\"");
    line(s, px(0.0), py(v), px(1.0), py(v), "stroke=\"#dddddd\" stroke-width=\"1\"");
    text(s, px(v), py(0.0) + 18.0, fmt_double(v),
         "text-anchor=\"middle\" fill=\"#333333\"");
    text(s, px(0.0) - 8.0, py(v) + 4.0, fmt_double(v),
         "text-anchor=\"end\" fill=\"#333333\"");
  }
  line(s, px(0.0), py(0.0), px(1.0), py(0.0), "stroke=\"#333333\" stroke-width=\"1\"");
  line(s, px(0.0), py(0.0), px(0.0), py(1.0), "stroke=\"#333333\" stroke-width=\"1\"");
  text(s, px(0.5), kHeight - 14.0, "%ER", "text-anchor=\"middle\" fill=\"#333333\"");
  text(s, 20.0, py(0.5), "Attr%",
       "text-anchor=\"middle\" fill=\"#333333\" transform=\"rotate(-90 20 " +
           fmt_double(py(0.5)) + ")\"");

  // A random map scores Attr% equal to the region fraction: the diagonal is
  // the no-information reference, the y=1 line the perfect-mass ceiling.
  line(s, px(0.0), py(0.0), px(1.0), py(1.0),
       "stroke=\"#d62728\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"");
  line(s, px(0.0), py(1.0), px(1.0), py(1.0),
       "stroke=\"#555555\" stroke-width=\"1\" stroke-dasharray=\"2 4\"");

  std::vector<int> labels;
  for (const InstanceRow& row : rep.rows) {
    s += "  <circle cx=\"" + fmt_double(px(row.er_pct)) + "\" cy=\"" +
         fmt_double(py(row.attr_fc)) + "\" r=\"3\" fill=\"" + point_color(row.label) +
         "\" fill-opacity=\"0.7\"/>\n";
    if (std::find(labels.begin(), labels.end(), row.label) == labels.end()) {
      labels.push_back(row.label);
    }
  }
  std::sort(labels.begin(), labels.end());

  double ly = kTop + 14.0;
  for (int label : labels) {
    s += "  <circle cx=\"" + fmt_double(kLeft + 12.0) + "\" cy=\"" + fmt_double(ly - 4.0) +
         "\" r=\"4\" fill=\"" + std::string(point_color(label)) + "\"/>\n";
    text(s, kLeft + 22.0, ly, "class " + std::to_string(label), "fill=\"#333333\"");
    ly += 16.0;
  }

  const std::string csv = to_csv(rep);
  if (csv.find("--") != std::string::npos) {
    throw ValidationError("report data cannot be embedded in an SVG comment");
  }
  s += "  <!--data\n" + csv + "-->\n</svg>\n";
  return s;
}

}  // namespace atgt::report
