#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "atgt/core.hpp"
#include "atgt/errors.hpp"
#include "atgt/report.hpp"
#include "json.hpp"

using namespace atgt;
using namespace atgt::report;

namespace {

Instance flat_instance(std::string id, uint32_t n, int y = 0) {
  Instance inst;
  inst.id = std::move(id);
  inst.shape = Shape::flat(n);
  inst.features.assign(n, 0.0f);
  inst.y_orig = inst.y_hat = y;
  return inst;
}

AttributionMap map_for(const Instance& inst, std::vector<float> scores) {
  return AttributionMap{inst.id, std::move(scores)};
}

InstanceRow row_of(std::string id, int label, double fc, double fn, double er, double pr,
                   double re) {
  InstanceRow r;
  r.id = std::move(id);
  r.label = label;
  r.attr_fc = fc;
  r.attr_fn = fn;
  r.er_pct = er;
  r.precision = pr;
  r.recall = re;
  return r;
}

}  // namespace

TEST_CASE("build_row computes every column") {
  const Instance inst = flat_instance("a1", 8, 1);
  const AttributionMap attr =
      map_for(inst, {4.0f, 0.0f, 0.0f, 0.0f, 1.0f, 1.0f, 1.0f, 1.0f});
  GroundTruthSpec truth;
  truth.f_c = EffectiveRegion({0});
  truth.f_n = EffectiveRegion({4, 5});

  const InstanceRow row = build_row(inst, attr, truth);
  CHECK(row.id == "a1");
  CHECK(row.label == 1);
  CHECK(row.attr_fc == 0.5);
  CHECK(row.attr_fn == 0.25);
  CHECK(row.er_pct == 0.125);
  CHECK(row.precision == 1.0);
  CHECK(row.recall == 1.0);
}

TEST_CASE("build_row validates its inputs") {
  const Instance inst = flat_instance("a1", 4);
  GroundTruthSpec truth;
  truth.f_c = EffectiveRegion({0});

  CHECK_THROWS_AS(build_row(inst, AttributionMap{"other", {1.0f, 0.0f, 0.0f, 0.0f}}, truth),
                  ValidationError);

  GroundTruthSpec empty;
  CHECK_THROWS_AS(build_row(inst, map_for(inst, {1.0f, 0.0f, 0.0f, 0.0f}), empty),
                  ValidationError);

  GroundTruthSpec overlapping;
  overlapping.f_c = EffectiveRegion({0, 1});
  overlapping.f_n = EffectiveRegion({1, 2});
  CHECK_THROWS_AS(build_row(inst, map_for(inst, {1.0f, 0.0f, 0.0f, 0.0f}), overlapping),
                  ValidationError);

  Instance bad_id = flat_instance("a,1", 4);
  CHECK_THROWS_AS(
      build_row(bad_id, map_for(bad_id, {1.0f, 0.0f, 0.0f, 0.0f}), truth),
      ValidationError);
}

TEST_CASE("indicator and uniform maps hit the two reference lines") {
  const Instance inst = flat_instance("ref", 10);
  GroundTruthSpec truth;
  truth.f_c = EffectiveRegion({2, 3, 4});

  std::vector<float> indicator(10, 0.0f);
  for (uint32_t f : truth.f_c.indices()) indicator[f] = 1.0f;
  const InstanceRow on_top = build_row(inst, map_for(inst, indicator), truth);
  CHECK(on_top.attr_fc == 1.0);
  CHECK(on_top.precision == 1.0);
  CHECK(on_top.recall == 1.0);

  // A uniform map puts region-fraction mass everywhere: the y=x diagonal.
  const InstanceRow diagonal =
      build_row(inst, map_for(inst, std::vector<float>(10, 0.5f)), truth);
  CHECK(diagonal.attr_fc == diagonal.er_pct);
  CHECK(diagonal.attr_fc == 0.3);
}

TEST_CASE("summarize sorts rows and aggregates per class") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("b", 0, 0.4, 0.1, 0.2, 1.0, 0.5));
  rep.rows.push_back(row_of("a", 0, 0.2, 0.3, 0.2, 0.5, 1.0));
  rep.rows.push_back(row_of("c", 1, 0.9, 0.0, 0.2, 1.0, 1.0));
  summarize(rep);

  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].id == "a");
  CHECK(rep.rows[1].id == "b");
  CHECK(rep.rows[2].id == "c");

  REQUIRE(rep.classes.size() == 2);
  const ClassSummary& c0 = rep.classes[0];
  CHECK(c0.label == 0);
  CHECK(c0.count == 2);
  CHECK(c0.attr_fc_mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(c0.attr_fc_stdev == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(c0.attr_fn_mean == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(c0.er_pct_mean == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(c0.precision_mean == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(c0.recall_mean == doctest::Approx(0.75).epsilon(1e-15));

  const ClassSummary& c1 = rep.classes[1];
  CHECK(c1.label == 1);
  CHECK(c1.count == 1);
  CHECK(c1.attr_fc_mean == 0.9);
  CHECK(c1.attr_fc_stdev == 0.0);  // single row, no spread
}

TEST_CASE("CSV output is exact and stable") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("img0001", 0, 0.5, 0.25, 0.125, 1.0, 1.0));
  rep.rows.push_back(row_of("img0002", 1, 0.75, 0.0, 0.125, 0.5, 0.5));

  const std::string want =
      "id,attr_fc,attr_fn,er_pct,precision,recall\n"
      "img0001,0.5,0.25,0.125,1,1\n"
      "img0002,0.75,0,0.125,0.5,0.5\n";
  CHECK(to_csv(rep) == want);
  CHECK(to_csv(rep) == want);  // byte-identical on repeat

  EvaluationReport bad;
  bad.rows.push_back(row_of("a,b", 0, 0.0, 0.0, 0.0, 0.0, 0.0));
  CHECK_THROWS_AS(to_csv(bad), ValidationError);
}

TEST_CASE("JSON aggregate embeds config, summaries, and verdicts") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("x1", 0, 0.5, 0.25, 0.125, 1.0, 1.0));
  rep.rows.push_back(row_of("x2", 1, 0.9, 0.05, 0.125, 1.0, 1.0));
  summarize(rep);
  rep.p_star = 0.5;
  rep.model_accuracy = 0.99;
  rep.accuracy_count = 500;
  rep.significance = 1e-90;
  rep.missing_ids = {"x3"};
  rep.unmatched_ids = {"ghost"};
  rep.verdicts.push_back({"shapley_vm_lower", 0.5, 0.95, true});

  const std::string text = to_json(rep, "{\"r\": 0.5, \"seed\": 7}");
  CHECK(to_json(rep, "{\"r\": 0.5, \"seed\": 7}") == text);

  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j.at("config").at("r") == 0.5);
  CHECK(j.at("config").at("seed") == 7);
  CHECK(j.at("p_star") == 0.5);
  CHECK(j.at("instances") == 2);
  CHECK(j.at("model_accuracy") == 0.99);
  CHECK(j.at("accuracy_count") == 500);
  CHECK(j.at("significance") == 1e-90);
  CHECK(j.at("excluded_missing") == std::vector<std::string>{"x3"});
  CHECK(j.at("unmatched_attributions") == std::vector<std::string>{"ghost"});
  REQUIRE(j.at("classes").size() == 2);
  CHECK(j.at("classes")[0].at("label") == 0);
  CHECK(j.at("classes")[0].at("count") == 1);
  CHECK(j.at("classes")[1].at("attr_fc_mean") == 0.9);
  REQUIRE(j.at("envelopes").size() == 1);
  CHECK(j.at("envelopes")[0].at("name") == "shapley_vm_lower");
  CHECK(j.at("envelopes")[0].at("pass") == true);
  CHECK(j.at("version").is_string());

  const nlohmann::json bare = nlohmann::json::parse(to_json(rep, ""));
  CHECK(bare.at("config").is_null());

  CHECK_THROWS_AS(to_json(rep, "{not json"), ValidationError);
}

TEST_CASE("JSON null slots appear when optional inputs are absent") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("only", 0, 0.5, 0.25, 0.125, 1.0, 1.0));
  summarize(rep);
  const nlohmann::json j = nlohmann::json::parse(to_json(rep, ""));
  CHECK(j.at("model_accuracy").is_null());
  CHECK(j.at("accuracy_count").is_null());
  CHECK(j.at("significance").is_null());
}

TEST_CASE("SVG scatter embeds its data and draws every point") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("p1", 0, 0.5, 0.25, 0.125, 1.0, 1.0));
  rep.rows.push_back(row_of("p2", 1, 0.9, 0.05, 0.25, 1.0, 1.0));
  rep.rows.push_back(row_of("p3", 1, 0.85, 0.1, 0.25, 0.5, 0.5));
  summarize(rep);

  const std::string svg = to_svg(rep);
  CHECK(to_svg(rep) == svg);  // byte-identical on repeat
  CHECK(svg.rfind("<svg ", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);

  // Data comment carries the exact CSV bytes.
  const std::string comment = "<!--data\n" + to_csv(rep) + "-->";
  CHECK(svg.find(comment) != std::string::npos);

  // Three data points plus one legend dot per class.
  std::size_t circles = 0;
  for (std::size_t pos = svg.find("<circle"); pos != std::string::npos;
       pos = svg.find("<circle", pos + 1)) {
    ++circles;
  }
  CHECK(circles == 3 + 2);

  // Reference lines: the red random-map diagonal and the dashed ceiling.
  CHECK(svg.find("#d62728") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
  CHECK(svg.find("%ER") != std::string::npos);
  CHECK(svg.find("Attr%") != std::string::npos);
}

TEST_CASE("SVG refuses ids that would break the data comment") {
  EvaluationReport rep;
  rep.rows.push_back(row_of("a--b", 0, 0.5, 0.25, 0.125, 1.0, 1.0));
  CHECK_THROWS_AS(to_svg(rep), ValidationError);
  CHECK_THROWS_AS(to_csv(rep), ValidationError);
}
