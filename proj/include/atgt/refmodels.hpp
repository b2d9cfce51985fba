#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::refmodels {

// Maps instances to model input vectors.
//   raw: image or flat features centered at mid-range (value - 0.5, images
//   flattened h*w*c) so [0,1] data trains at zero mean.
//   positional_bow: token counts per (half, token id), dimension 2*vocab;
//   the halves split at floor(len/2) like the text constructions do.
struct Featurizer {
  enum class Kind { raw, positional_bow };

  Kind kind = Kind::raw;
  Shape shape;        // raw: required instance shape
  uint32_t vocab = 0; // positional_bow

  static Featurizer raw(const Shape& shape);
  static Featurizer positional_bow(uint32_t vocab_size);

  uint32_t input_dim() const;
  void validate() const;
};

std::vector<double> featurize(const Instance& inst, const Featurizer& feat);

// Linear softmax classifier or one-hidden-layer tanh MLP.
struct RefModel {
  enum class Kind { linear, mlp };

  Kind kind = Kind::linear;
  uint32_t input_dim = 0;
  uint32_t num_classes = 2;
  uint32_t hidden = 0;           // mlp width; 0 for linear
  std::vector<double> hidden_w;  // hidden x input_dim, row-major (mlp only)
  std::vector<double> hidden_b;  // hidden (mlp only)
  std::vector<double> out_w;     // num_classes x (hidden or input_dim), row-major
  std::vector<double> out_b;     // num_classes

  std::vector<double> logits(const std::vector<double>& x) const;
  std::vector<double> probabilities(const std::vector<double>& x) const;
  int predict(const std::vector<double>& x) const;  // argmax, ties to lowest class

  void validate() const;  // dimensions consistent, parameters finite
};

struct TrainConfig {
  double learning_rate = 0.1;
  uint32_t batch_size = 32;
  uint32_t epochs = 40;
  double l2 = 0.0;
  uint32_t patience = 0;  // early stop on validation accuracy; 0 disables
  uint32_t hidden = 0;    // 0 trains a linear model
  uint64_t seed = 0;

  void validate() const;
};

// Minibatch SGD on softmax cross-entropy over the instances with
// split == "train", seeded shuffling, single-threaded so results are
// bit-reproducible from (dataset, featurizer, cfg). When a "val" split
// exists the best-validation-accuracy snapshot is returned, otherwise the
// final model. Labels are the post-reassignment y_hat.
RefModel train(const Dataset& data, const Featurizer& feat, const TrainConfig& cfg);

// Fraction of instances in the split ("" = every instance) whose predicted
// class equals y_hat.
double accuracy(const RefModel& model, const Dataset& data, const Featurizer& feat,
                const std::string& split = "");

// |d logit_pred / d input| per attributable feature. Image channels are
// summed after the absolute value, so the map has one score per pixel; text
// maps carry one score per token position via the count-slot chain rule.
AttributionMap grad_attribution(const RefModel& model, const Instance& inst,
                                const Featurizer& feat);

// Mean of grad_attribution over n Gaussian-noised copies of the input,
// sigma = sigma_frac * (max x - min x). The class is fixed to the clean
// prediction, so on a linear model every copy yields the identical map and
// the running mean equals grad_attribution bit for bit.
AttributionMap smoothgrad(const RefModel& model, const Instance& inst,
                          const Featurizer& feat, uint32_t n, double sigma_frac,
                          uint64_t seed);

// Predicted-class probability drop when a centered window of attributable
// features is forced to the baseline (raw kinds) or removed from the counts
// (positional_bow, which takes an empty baseline).
AttributionMap occlusion_attribution(const RefModel& model, const Instance& inst,
                                     const Featurizer& feat,
                                     const std::vector<double>& baseline,
                                     uint32_t window);

// Exact Shapley values of the coalition game v(S) = predicted-class
// probability with features outside S at baseline, one value per group.
// groups must partition the attributable features; at most 20 groups (the
// 2^G coalition table is enumerated in full). The values sum to
// v(all) - v(none) up to rounding.
std::vector<double> exact_shapley_groups(const RefModel& model, const Instance& inst,
                                         const Featurizer& feat,
                                         const std::vector<FeatureSet>& groups,
                                         const std::vector<double>& baseline);

// Per-input-dimension mean over the dataset for raw featurizers; the empty
// vector for positional_bow, whose natural baseline is token absence.
std::vector<double> mean_baseline(const Dataset& data, const Featurizer& feat);

// Versioned little-endian weight blob plus a JSON hyperparameter sidecar at
// path + ".json".
void save_model(const RefModel& model, const std::string& path);
RefModel load_model(const std::string& path);

}  // namespace atgt::refmodels
