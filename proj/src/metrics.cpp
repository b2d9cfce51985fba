#include "atgt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "atgt/errors.hpp"

namespace atgt::metrics {

double attr_percent(const AttributionMap& attr, const EffectiveRegion& f) {
  double total = 0.0;
  for (float s : attr.scores) {
    if (std::isnan(s)) throw ValidationError("attribution scores contain NaN");
    total += std::abs(static_cast<double>(s));
  }
  if (total == 0.0) {
    throw NumericError("attr_percent undefined: attribution map is all zeros");
  }
  double inside = 0.0;
  for (uint32_t i : f.indices()) {
    if (i >= attr.scores.size()) {
      throw ValidationError("feature index " + std::to_string(i) +
                            " out of range for attribution of length " +
                            std::to_string(attr.scores.size()));
    }
    inside += std::abs(static_cast<double>(attr.scores[i]));
  }
  return inside / total;
}

double er_percent(const EffectiveRegion& er, uint64_t d) {
  if (d < 1) throw ValidationError("er_percent requires at least one feature");
  if (!er.empty() && er.indices().back() >= d) {
    throw ValidationError("effective region index out of range");
  }
  return static_cast<double>(er.size()) / static_cast<double>(d);
}

PrecisionRecall precision_recall(const FeatureSet& f, const EffectiveRegion& f_c) {
  if (f.empty()) throw ValidationError("precision undefined for an empty selection");
  if (f_c.empty()) throw ValidationError("recall undefined for an empty target set");
  const auto& a = f.indices();
  const auto& b = f_c.indices();
  std::size_t hits = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++hits;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return {static_cast<double>(hits) / static_cast<double>(a.size()),
          static_cast<double>(hits) / static_cast<double>(b.size())};
}

FeatureSet topk_select(const AttributionMap& attr, std::size_t k) {
  const std::size_t d = attr.scores.size();
  if (k < 1 || k > d) {
    throw ValidationError("topk_select requires 1 <= k <= " + std::to_string(d));
  }
  std::vector<uint32_t> order(d);
  std::iota(order.begin(), order.end(), 0u);
  for (float s : attr.scores) {
    if (std::isnan(s)) throw ValidationError("attribution scores contain NaN");
  }
  std::sort(order.begin(), order.end(), [&](uint32_t x, uint32_t y) {
    const double ax = std::abs(static_cast<double>(attr.scores[x]));
    const double ay = std::abs(static_cast<double>(attr.scores[y]));
    if (ax != ay) return ax > ay;
    return x < y;
  });
  order.resize(k);
  return FeatureSet::from_unsorted(std::move(order));
}

PrecisionRecall selection_envelope(uint64_t budget, const std::vector<uint64_t>& fc_sizes,
                                   const std::vector<uint64_t>& lengths,
                                   EnvelopeLevel level) {
  if (budget < 1) throw ValidationError("selection_envelope requires budget >= 1");
  if (fc_sizes.size() != lengths.size() || fc_sizes.empty()) {
    throw ValidationError("selection_envelope needs matching non-empty size lists");
  }
  uint64_t t = 0, total_len = 0;
  for (std::size_t i = 0; i < fc_sizes.size(); ++i) {
    if (lengths[i] < 1) throw ValidationError("selection_envelope: empty review");
    if (fc_sizes[i] > lengths[i]) {
      throw ValidationError("selection_envelope: |F_C| exceeds review length");
    }
    t += fc_sizes[i];
    total_len += lengths[i];
  }
  if (t == 0) {
    throw ValidationError("selection_envelope: no review has correlating tokens");
  }

  if (level == EnvelopeLevel::dataset) {
    const double td = static_cast<double>(t);
    const double bd = static_cast<double>(budget);
    return {std::min(1.0, td / bd), std::min(1.0, bd / td)};
  }

  const double sel_rate = static_cast<double>(budget) / static_cast<double>(total_len);
  uint64_t sum_k = 0, sum_hits = 0;
  for (std::size_t i = 0; i < fc_sizes.size(); ++i) {
    const uint64_t k = std::min<uint64_t>(
        lengths[i],
        static_cast<uint64_t>(std::llround(sel_rate * static_cast<double>(lengths[i]))));
    sum_k += k;
    sum_hits += std::min(k, fc_sizes[i]);
  }
  if (sum_k == 0) return {1.0, 0.0};
  return {static_cast<double>(sum_hits) / static_cast<double>(sum_k),
          static_cast<double>(sum_hits) / static_cast<double>(t)};
}

void ShapleyInputs::validate() const {
  if (!(p >= 0.5 && p <= 1.0)) {
    throw ValidationError("shapley inputs: p must lie in [0.5, 1]");
  }
  if (!(a_fo >= 0.5 && a_fo <= 1.0)) {
    throw ValidationError("shapley inputs: a_fo must lie in [0.5, 1]");
  }
}

ShapleyPair shapley_values(const ShapleyInputs& inp) {
  inp.validate();
  return {0.5 * ((inp.p - 0.5) + (inp.p - inp.a_fo)), 0.5 * (inp.a_fo - 0.5)};
}

ShapleyPair normalized_shapley_values(const ShapleyInputs& inp) {
  const ShapleyPair v = shapley_values(inp);
  const double total = v.v_m + v.v_o;
  if (total <= 0.0) {
    throw NumericError("normalized shapley values undefined at chance accuracy");
  }
  return {v.v_m / total, v.v_o / total};
}

ShapleyBounds shapley_envelope(double p, double r) {
  if (!(r >= 0.5 && r <= 1.0)) {
    throw ValidationError("shapley_envelope: r must lie in [0.5, 1]");
  }
  if (!(p > 0.5 && p <= 1.0)) {
    throw NumericError("shapley_envelope: normalization degenerate unless 0.5 < p <= 1");
  }
  // (p - 0.5) + (p - r) reproduces the closed form 2p - r - 0.5 and, at
  // p = 1, rounds identically to the literal 1.5 - r (1 - r is exact by
  // Sterbenz for r in [0.5, 1], so the one rounding happens in the add).
  const double denom = 2.0 * p - 1.0;
  const double vm_lower = ((p - 0.5) + (p - r)) / denom;
  const double vo_upper = (r - 0.5) / denom;
  return {vm_lower, vo_upper};
}

void EnumerableTask::validate() const {
  if (points.empty()) throw ValidationError("enumerable task has empty support");
  if (labels.size() != points.size() || probs.size() != points.size()) {
    throw ValidationError("enumerable task field lengths disagree");
  }
  if (!classifier) throw ValidationError("enumerable task lacks a classifier");
  const std::size_t dim = points.front().size();
  double mass = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) {
      throw ValidationError("enumerable task support points differ in dimension");
    }
    if (labels[i] < 0 || static_cast<uint32_t>(labels[i]) >= num_classes) {
      throw ValidationError("enumerable task label out of range");
    }
    if (!(probs[i] >= 0.0)) throw ValidationError("enumerable task probability negative");
    mass += probs[i];
  }
  if (std::abs(mass - 1.0) > 1e-12) {
    throw ValidationError("enumerable task probabilities must sum to 1");
  }
}

double expected_accuracy_given(const FeatureSet& f, const EnumerableTask& task) {
  task.validate();
  const std::size_t dim = task.points.front().size();
  for (uint32_t i : f.indices()) {
    if (i >= dim) throw ValidationError("feature index out of range for task dimension");
  }

  struct Group {
    double w = 0.0;
    std::vector<double> by_pred;   // mass the classifier maps to each class
    std::vector<double> by_label;  // mass carrying each true label
  };
  std::map<std::vector<double>, Group> groups;

  for (std::size_t i = 0; i < task.points.size(); ++i) {
    if (task.probs[i] == 0.0) continue;
    std::vector<double> key;
    key.reserve(f.size());
    for (uint32_t idx : f.indices()) key.push_back(task.points[i][idx]);
    Group& g = groups[key];
    if (g.by_pred.empty()) {
      g.by_pred.assign(task.num_classes, 0.0);
      g.by_label.assign(task.num_classes, 0.0);
    }
    const int pred = task.classifier(task.points[i]);
    if (pred < 0 || static_cast<uint32_t>(pred) >= task.num_classes) {
      throw ValidationError("classifier returned an out-of-range class");
    }
    g.w += task.probs[i];
    g.by_pred[static_cast<std::size_t>(pred)] += task.probs[i];
    g.by_label[static_cast<std::size_t>(task.labels[i])] += task.probs[i];
  }

  double acc = 0.0;
  for (const auto& [key, g] : groups) {
    if (g.w <= 0.0) continue;
    double agree = 0.0;
    for (uint32_t c = 0; c < task.num_classes; ++c) agree += g.by_pred[c] * g.by_label[c];
    acc += agree / g.w;
  }
  return acc;
}

double chi_square_survival(double x, uint32_t dof) {
  if (dof == 0) throw ValidationError("chi-square needs at least one degree of freedom");
  if (!(x >= 0.0)) throw ValidationError("chi-square statistic must be non-negative");
  // Q(x; 1) = erfc(sqrt(x/2)), Q(x; 2) = exp(-x/2), and
  // Q(x; k) = Q(x; k-2) + (x/2)^(k/2-1) exp(-x/2) / Gamma(k/2).
  double q = dof % 2 == 1 ? std::erfc(std::sqrt(x / 2.0)) : std::exp(-x / 2.0);
  for (uint32_t k = dof % 2 == 1 ? 3 : 4; k <= dof; k += 2) {
    const double half = k / 2.0;
    q += std::exp((half - 1.0) * std::log(x / 2.0) - x / 2.0 - std::lgamma(half));
  }
  return std::min(1.0, q);
}

double chi_square_uniform_pvalue(const std::vector<uint64_t>& counts) {
  if (counts.size() < 2) throw ValidationError("uniformity test needs >= 2 categories");
  uint64_t n = 0;
  for (uint64_t c : counts) n += c;
  if (n == 0) throw ValidationError("uniformity test needs at least one observation");
  const double expected = static_cast<double>(n) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (uint64_t c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return chi_square_survival(stat, static_cast<uint32_t>(counts.size()) - 1);
}

}  // namespace atgt::metrics
