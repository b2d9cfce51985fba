#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::metrics {

// Fraction of total absolute attribution mass inside f. Throws when every
// score is zero (the normalization is undefined) or f addresses a feature
// beyond the map's length.
double attr_percent(const AttributionMap& attr, const EffectiveRegion& f);

// |er| / d.
double er_percent(const EffectiveRegion& er, uint64_t d);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// Pr = |f intersect f_c| / |f|, Re = |f intersect f_c| / |f_c|. Either side
// empty makes its metric undefined and throws.
PrecisionRecall precision_recall(const FeatureSet& f, const EffectiveRegion& f_c);

// Indices of the k largest |score|, ties broken toward the lowest index.
FeatureSet topk_select(const AttributionMap& attr, std::size_t k);

enum class EnvelopeLevel { dataset, per_instance };

// Best achievable precision/recall for a token-selection method at the given
// budget. Dataset level spends the budget anywhere; per-instance level fixes
// each review's selection count at round(sel_rate * length) capped at the
// review length, with sel_rate = budget / total length. A per-instance
// budget that rounds to zero everywhere yields vacuous precision 1, recall 0.
PrecisionRecall selection_envelope(uint64_t budget, const std::vector<uint64_t>& fc_sizes,
                                   const std::vector<uint64_t>& lengths, EnvelopeLevel level);

// Accuracies of the two-player performance game: p with both feature groups,
// a_fo with only the original (unmanipulated) features.
struct ShapleyInputs {
  double p = 0.5;
  double a_fo = 0.5;

  void validate() const;  // both in [0.5, 1]
};

struct ShapleyPair {
  double v_m = 0.0;  // manipulated-feature group
  double v_o = 0.0;  // original-feature group
};

// v_m = ((p - 0.5) + (p - a_fo)) / 2, v_o = (a_fo - 0.5) / 2.
// Efficiency: v_m + v_o = p - 0.5, the full value above chance.
ShapleyPair shapley_values(const ShapleyInputs& inp);

// Values divided by their sum; requires p > 0.5.
ShapleyPair normalized_shapley_values(const ShapleyInputs& inp);

struct ShapleyBounds {
  double vm_lower = 0.0;  // least normalized mass the manipulated group can get
  double vo_upper = 0.0;  // most the original group can get
};

// ((2p - r - 0.5) / (2p - 1), (r - 0.5) / (2p - 1)) for keep-probability r.
// The bounds sum to 1. At p = 1 the pair is exactly (1.5 - r, r - 0.5).
ShapleyBounds shapley_envelope(double p, double r);

// A fully enumerated joint distribution over (feature vector, label) plus a
// total classifier, small enough for exact expectation sums.
struct EnumerableTask {
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
  std::vector<double> probs;
  std::function<int(const std::vector<double>&)> classifier;
  uint32_t num_classes = 2;

  void validate() const;
};

// Expected accuracy when only the features in f are distinguishable: the
// label is rescored against a fresh draw (x', y') sharing x's values on f,
// and the classifier still sees all of x. Computed by exact enumeration:
//   a(F) = sum_groups (sum_c G[c] * B[c]) / W
// where groups share x|_F, G[c] is the probability mass the classifier maps
// to c within the group, B[c] the mass with true label c, W the group mass.
double expected_accuracy_given(const FeatureSet& f, const EnumerableTask& task);

// Upper tail P(X >= x) of the chi-square distribution with integer dof,
// exact closed forms chained through the two-step recurrence.
double chi_square_survival(double x, uint32_t dof);

// Pearson goodness-of-fit p-value of the counts against the uniform
// distribution over their categories (dof = categories - 1).
double chi_square_uniform_pvalue(const std::vector<uint64_t>& counts);

}  // namespace atgt::metrics
