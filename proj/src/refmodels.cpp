#include "atgt/refmodels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>

#include "atgt/errors.hpp"
#include "atgt/io.hpp"
#include "atgt/rng.hpp"
#include "json.hpp"

namespace atgt::refmodels {

namespace {

// Raw values per attributable feature: image pixels own their channels,
// flat features are one value each.
uint32_t dims_per_feature(const Shape& shape) {
  return shape.kind == Shape::Kind::image ? shape.c : 1;
}

// Count-vector slot of each token position: (half, token id), halves split
// at floor(len/2) exactly like the text constructions.
std::vector<uint32_t> bow_slots(const Instance& inst, uint32_t vocab) {
  if (inst.shape.kind != Shape::Kind::text) {
    throw ValidationError("positional_bow featurizer needs text instances, got instance '" +
                          inst.id + "'");
  }
  if (inst.features.size() != inst.shape.raw_size()) {
    throw ValidationError("instance '" + inst.id + "' feature blob does not match its shape");
  }
  const uint32_t len = inst.shape.length;
  const uint32_t mid = len / 2;
  std::vector<uint32_t> slots(len);
  for (uint32_t pos = 0; pos < len; ++pos) {
    const double raw = inst.features[pos];
    if (!(raw >= 0.0) || raw != std::floor(raw) || raw >= vocab) {
      throw ValidationError("instance '" + inst.id + "' token at position " +
                            std::to_string(pos) + " is not a vocabulary id below " +
                            std::to_string(vocab));
    }
    const uint32_t half = pos < mid ? 0u : 1u;
    slots[pos] = half * vocab + static_cast<uint32_t>(raw);
  }
  return slots;
}

std::vector<double> hidden_activations(const RefModel& m, const std::vector<double>& x) {
  std::vector<double> a(m.hidden);
  for (uint32_t h = 0; h < m.hidden; ++h) {
    double z = m.hidden_b[h];
    const double* row = m.hidden_w.data() + static_cast<std::size_t>(h) * m.input_dim;
    for (uint32_t j = 0; j < m.input_dim; ++j) z += row[j] * x[j];
    a[h] = std::tanh(z);
  }
  return a;
}

std::vector<double> output_layer(const RefModel& m, const std::vector<double>& in) {
  const uint32_t width = m.kind == RefModel::Kind::linear ? m.input_dim : m.hidden;
  std::vector<double> l(m.num_classes);
  for (uint32_t c = 0; c < m.num_classes; ++c) {
    double z = m.out_b[c];
    const double* row = m.out_w.data() + static_cast<std::size_t>(c) * width;
    for (uint32_t j = 0; j < width; ++j) z += row[j] * in[j];
    l[c] = z;
  }
  return l;
}

// d logit_c / d x, length input_dim.
std::vector<double> input_gradient(const RefModel& m, const std::vector<double>& x,
                                   uint32_t c) {
  if (m.kind == RefModel::Kind::linear) {
    const double* row = m.out_w.data() + static_cast<std::size_t>(c) * m.input_dim;
    return std::vector<double>(row, row + m.input_dim);
  }
  const std::vector<double> a = hidden_activations(m, x);
  std::vector<double> g(m.input_dim, 0.0);
  for (uint32_t h = 0; h < m.hidden; ++h) {
    const double back = m.out_w[static_cast<std::size_t>(c) * m.hidden + h] *
                        (1.0 - a[h] * a[h]);
    const double* row = m.hidden_w.data() + static_cast<std::size_t>(h) * m.input_dim;
    for (uint32_t j = 0; j < m.input_dim; ++j) g[j] += back * row[j];
  }
  return g;
}

// Absolute input gradient folded onto attributable features: channels of a
// pixel are summed after taking absolute values, token positions read the
// gradient of their count slot.
std::vector<double> fold_gradient(const std::vector<double>& g, const Instance& inst,
                                  const Featurizer& feat) {
  if (feat.kind == Featurizer::Kind::raw) {
    const uint32_t dpf = dims_per_feature(inst.shape);
    const std::size_t n = inst.shape.feature_count();
    std::vector<double> scores(n, 0.0);
    for (std::size_t f = 0; f < n; ++f) {
      for (uint32_t ch = 0; ch < dpf; ++ch) scores[f] += std::fabs(g[f * dpf + ch]);
    }
    return scores;
  }
  const std::vector<uint32_t> slots = bow_slots(inst, feat.vocab);
  std::vector<double> scores(slots.size());
  for (std::size_t pos = 0; pos < slots.size(); ++pos) scores[pos] = std::fabs(g[slots[pos]]);
  return scores;
}

std::vector<float> to_float_scores(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

void check_baseline(const Featurizer& feat, const std::vector<double>& baseline) {
  if (feat.kind == Featurizer::Kind::positional_bow) {
    if (!baseline.empty()) {
      throw ValidationError(
          "positional_bow takes an empty baseline: absent features drop out of the counts");
    }
    return;
  }
  if (baseline.size() != feat.input_dim()) {
    throw ValidationError("baseline has " + std::to_string(baseline.size()) +
                          " values, featurizer expects " + std::to_string(feat.input_dim()));
  }
  for (double v : baseline) {
    if (!std::isfinite(v)) throw ValidationError("baseline contains a non-finite value");
  }
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw ValidationError(std::string("model ") + what + " contains a non-finite value");
    }
  }
}

}  // namespace

Featurizer Featurizer::raw(const Shape& shape) {
  Featurizer f;
  f.kind = Kind::raw;
  f.shape = shape;
  f.validate();
  return f;
}

Featurizer Featurizer::positional_bow(uint32_t vocab_size) {
  Featurizer f;
  f.kind = Kind::positional_bow;
  f.vocab = vocab_size;
  f.validate();
  return f;
}

uint32_t Featurizer::input_dim() const {
  if (kind == Kind::raw) return static_cast<uint32_t>(shape.raw_size());
  return 2 * vocab;
}

void Featurizer::validate() const {
  if (kind == Kind::raw) {
    if (shape.kind == Shape::Kind::text) {
      throw ValidationError("raw featurizer cannot consume text instances");
    }
    if (shape.raw_size() == 0) throw ValidationError("raw featurizer needs a non-empty shape");
    if (shape.raw_size() > (1u << 28)) {
      throw ValidationError("raw featurizer shape is implausibly large");
    }
  } else {
    if (vocab == 0) throw ValidationError("positional_bow needs a non-empty vocabulary");
    if (vocab > (1u << 24)) throw ValidationError("positional_bow vocabulary is implausibly large");
  }
}

std::vector<double> featurize(const Instance& inst, const Featurizer& feat) {
  feat.validate();
  if (feat.kind == Featurizer::Kind::raw) {
    if (!(inst.shape == feat.shape)) {
      throw ValidationError("instance '" + inst.id + "' does not match the featurizer shape");
    }
    if (inst.features.size() != inst.shape.raw_size()) {
      throw ValidationError("instance '" + inst.id + "' feature blob does not match its shape");
    }
    // Center at mid-range: [0,1] data trains at zero mean, which keeps the
    // class threshold in the bias instead of smearing it across every weight.
    // Gradients wrt the input are unchanged by the shift.
    std::vector<double> x(inst.features.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(inst.features[i]) - 0.5;
    return x;
  }
  std::vector<double> counts(feat.input_dim(), 0.0);
  for (uint32_t slot : bow_slots(inst, feat.vocab)) counts[slot] += 1.0;
  return counts;
}

std::vector<double> RefModel::logits(const std::vector<double>& x) const {
  if (x.size() != input_dim) {
    throw ValidationError("model input has " + std::to_string(x.size()) +
                          " values, expected " + std::to_string(input_dim));
  }
  if (kind == Kind::linear) return output_layer(*this, x);
  return output_layer(*this, hidden_activations(*this, x));
}

std::vector<double> RefModel::probabilities(const std::vector<double>& x) const {
  std::vector<double> l = logits(x);
  const double top = *std::max_element(l.begin(), l.end());
  double sum = 0.0;
  for (double& v : l) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : l) v /= sum;
  return l;
}

int RefModel::predict(const std::vector<double>& x) const {
  const std::vector<double> l = logits(x);
  int best = 0;
  for (uint32_t c = 1; c < num_classes; ++c) {
    if (l[c] > l[best]) best = static_cast<int>(c);
  }
  return best;
}

void RefModel::validate() const {
  if (input_dim == 0) throw ValidationError("model input_dim must be positive");
  if (num_classes < 2) throw ValidationError("model needs at least two classes");
  const std::size_t d = input_dim;
  if (kind == Kind::linear) {
    if (hidden != 0 || !hidden_w.empty() || !hidden_b.empty()) {
      throw ValidationError("linear model must not carry hidden-layer parameters");
    }
    if (out_w.size() != num_classes * d) throw ValidationError("model out_w has the wrong size");
  } else {
    if (hidden == 0) throw ValidationError("mlp model needs a positive hidden width");
    if (hidden_w.size() != static_cast<std::size_t>(hidden) * d) {
      throw ValidationError("model hidden_w has the wrong size");
    }
    if (hidden_b.size() != hidden) throw ValidationError("model hidden_b has the wrong size");
    if (out_w.size() != static_cast<std::size_t>(num_classes) * hidden) {
      throw ValidationError("model out_w has the wrong size");
    }
  }
  if (out_b.size() != num_classes) throw ValidationError("model out_b has the wrong size");
  check_finite(hidden_w, "hidden_w");
  check_finite(hidden_b, "hidden_b");
  check_finite(out_w, "out_w");
  check_finite(out_b, "out_b");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive and finite");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (!(l2 >= 0.0) || !std::isfinite(l2)) throw ValidationError("l2 must be non-negative");
}

namespace {

struct Gradients {
  std::vector<double> hidden_w, hidden_b, out_w, out_b;

  explicit Gradients(const RefModel& m)
      : hidden_w(m.hidden_w.size()),
        hidden_b(m.hidden_b.size()),
        out_w(m.out_w.size()),
        out_b(m.out_b.size()) {}

  void zero() {
    std::fill(hidden_w.begin(), hidden_w.end(), 0.0);
    std::fill(hidden_b.begin(), hidden_b.end(), 0.0);
    std::fill(out_w.begin(), out_w.end(), 0.0);
    std::fill(out_b.begin(), out_b.end(), 0.0);
  }
};

// Accumulates one sample's cross-entropy gradient; returns its loss.
double backprop_sample(const RefModel& m, const std::vector<double>& x, int y,
                       Gradients& g) {
  const std::vector<double> a =
      m.kind == RefModel::Kind::mlp ? hidden_activations(m, x) : std::vector<double>();
  const std::vector<double>& penultimate = m.kind == RefModel::Kind::mlp ? a : x;
  const uint32_t width = static_cast<uint32_t>(penultimate.size());

  std::vector<double> p = output_layer(m, penultimate);
  const double top = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : p) v /= sum;
  const double loss = -std::log(p[static_cast<std::size_t>(y)]);

  std::vector<double> dlogit = p;
  dlogit[static_cast<std::size_t>(y)] -= 1.0;

  for (uint32_t c = 0; c < m.num_classes; ++c) {
    const std::size_t row = static_cast<std::size_t>(c) * width;
    for (uint32_t j = 0; j < width; ++j) g.out_w[row + j] += dlogit[c] * penultimate[j];
    g.out_b[c] += dlogit[c];
  }
  if (m.kind == RefModel::Kind::mlp) {
    for (uint32_t h = 0; h < m.hidden; ++h) {
      double da = 0.0;
      for (uint32_t c = 0; c < m.num_classes; ++c) {
        da += dlogit[c] * m.out_w[static_cast<std::size_t>(c) * m.hidden + h];
      }
      const double dz = da * (1.0 - a[h] * a[h]);
      const std::size_t row = static_cast<std::size_t>(h) * m.input_dim;
      for (uint32_t j = 0; j < m.input_dim; ++j) g.hidden_w[row + j] += dz * x[j];
      g.hidden_b[h] += dz;
    }
  }
  return loss;
}

// Weights decay toward zero, biases do not.
void apply_update(std::vector<double>& w, const std::vector<double>& g, double lr,
                  double batch, double l2) {
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (g[i] / batch + l2 * w[i]);
}

}  // namespace

RefModel train(const Dataset& data, const Featurizer& feat, const TrainConfig& cfg) {
  cfg.validate();
  feat.validate();
  if (data.k < 2) throw ValidationError("dataset must have at least two classes");

  std::vector<std::vector<double>> train_x, val_x;
  std::vector<int> train_y, val_y;
  for (const Instance& inst : data.instances) {
    if (inst.split != "train" && inst.split != "val") continue;
    if (inst.y_hat < 0 || static_cast<uint32_t>(inst.y_hat) >= data.k) {
      throw ValidationError("instance '" + inst.id + "' label is outside [0, k)");
    }
    if (inst.split == "train") {
      train_x.push_back(featurize(inst, feat));
      train_y.push_back(inst.y_hat);
    } else {
      val_x.push_back(featurize(inst, feat));
      val_y.push_back(inst.y_hat);
    }
  }
  if (train_x.empty()) throw ValidationError("dataset has no instances with split \"train\"");

  RefModel model;
  model.kind = cfg.hidden == 0 ? RefModel::Kind::linear : RefModel::Kind::mlp;
  model.input_dim = feat.input_dim();
  model.num_classes = data.k;
  model.hidden = cfg.hidden;
  model.out_b.assign(model.num_classes, 0.0);
  if (model.kind == RefModel::Kind::linear) {
    // The objective is convex, so the zero start is fine and fully determined.
    model.out_w.assign(static_cast<std::size_t>(model.num_classes) * model.input_dim, 0.0);
  } else {
    Stream init(cfg.seed, "init");
    const double hs = 1.0 / std::sqrt(static_cast<double>(model.input_dim));
    model.hidden_w.resize(static_cast<std::size_t>(model.hidden) * model.input_dim);
    for (double& v : model.hidden_w) v = hs * init.next_gaussian();
    model.hidden_b.assign(model.hidden, 0.0);
    const double os = 1.0 / std::sqrt(static_cast<double>(model.hidden));
    model.out_w.resize(static_cast<std::size_t>(model.num_classes) * model.hidden);
    for (double& v : model.out_w) v = os * init.next_gaussian();
  }

  const auto split_accuracy = [&](const std::vector<std::vector<double>>& xs,
                                  const std::vector<int>& ys) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) hits += model.predict(xs[i]) == ys[i];
    return static_cast<double>(hits) / static_cast<double>(xs.size());
  };

  const std::size_t n = train_x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  RefModel best = model;
  double best_acc = -1.0;
  uint32_t stale = 0;
  Gradients grads(model);

  for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Stream shuffle(cfg.seed, "shuffle", epoch);
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = shuffle.next_below(i + 1);
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      grads.zero();
      double loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        loss += backprop_sample(model, train_x[order[i]], train_y[order[i]], grads);
      }
      if (!std::isfinite(loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      const double b = static_cast<double>(stop - start);
      apply_update(model.out_w, grads.out_w, cfg.learning_rate, b, cfg.l2);
      apply_update(model.out_b, grads.out_b, cfg.learning_rate, b, 0.0);
      if (model.kind == RefModel::Kind::mlp) {
        apply_update(model.hidden_w, grads.hidden_w, cfg.learning_rate, b, cfg.l2);
        apply_update(model.hidden_b, grads.hidden_b, cfg.learning_rate, b, 0.0);
      }
    }
    if (!val_x.empty()) {
      const double acc = split_accuracy(val_x, val_y);
      if (acc > best_acc) {
        best_acc = acc;
        best = model;
        stale = 0;
      } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
        break;
      }
    }
  }
  RefModel result = val_x.empty() ? std::move(model) : std::move(best);
  result.validate();
  return result;
}

double accuracy(const RefModel& model, const Dataset& data, const Featurizer& feat,
                const std::string& split) {
  std::size_t seen = 0, hits = 0;
  for (const Instance& inst : data.instances) {
    if (!split.empty() && inst.split != split) continue;
    ++seen;
    hits += model.predict(featurize(inst, feat)) == inst.y_hat;
  }
  if (seen == 0) {
    throw ValidationError(split.empty() ? std::string("dataset is empty")
                                        : "dataset has no instances with split \"" + split +
                                              "\"");
  }
  return static_cast<double>(hits) / static_cast<double>(seen);
}

AttributionMap grad_attribution(const RefModel& model, const Instance& inst,
                                const Featurizer& feat) {
  model.validate();
  const std::vector<double> x = featurize(inst, feat);
  const uint32_t c = static_cast<uint32_t>(model.predict(x));
  const std::vector<double> g = input_gradient(model, x, c);
  return AttributionMap{inst.id, to_float_scores(fold_gradient(g, inst, feat))};
}

AttributionMap smoothgrad(const RefModel& model, const Instance& inst,
                          const Featurizer& feat, uint32_t n, double sigma_frac,
                          uint64_t seed) {
  model.validate();
  if (n == 0) throw ValidationError("smoothgrad needs at least one sample");
  if (!(sigma_frac >= 0.0) || !std::isfinite(sigma_frac)) {
    throw ValidationError("smoothgrad sigma_frac must be non-negative");
  }
  const std::vector<double> x = featurize(inst, feat);
  // The class under attribution stays the clean prediction; re-predicting per
  // noisy copy would mix gradients of different classes.
  const uint32_t c = static_cast<uint32_t>(model.predict(x));
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double sigma = sigma_frac * (*hi - *lo);

  std::vector<double> mean;
  std::vector<double> noisy(x.size());
  for (uint32_t i = 0; i < n; ++i) {
    Stream s(seed, "smoothgrad", i);
    for (std::size_t j = 0; j < x.size(); ++j) noisy[j] = x[j] + sigma * s.next_gaussian();
    const std::vector<double> folded =
        fold_gradient(input_gradient(model, noisy, c), inst, feat);
    if (mean.empty()) {
      mean = folded;
    } else {
      // Running mean; identical summands leave it bit-exact.
      const double k = static_cast<double>(i + 1);
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += (folded[j] - mean[j]) / k;
    }
  }
  return AttributionMap{inst.id, to_float_scores(mean)};
}

AttributionMap occlusion_attribution(const RefModel& model, const Instance& inst,
                                     const Featurizer& feat,
                                     const std::vector<double>& baseline,
                                     uint32_t window) {
  model.validate();
  if (window == 0) throw ValidationError("occlusion window must be positive");
  check_baseline(feat, baseline);
  const std::vector<double> x = featurize(inst, feat);
  const uint32_t c = static_cast<uint32_t>(model.predict(x));
  const double p0 = model.probabilities(x)[c];

  const std::size_t count = inst.shape.feature_count();
  const std::size_t left = (window - 1) / 2;  // even windows extend one further right
  std::vector<uint32_t> slots;
  if (feat.kind == Featurizer::Kind::positional_bow) slots = bow_slots(inst, feat.vocab);
  const uint32_t dpf =
      feat.kind == Featurizer::Kind::raw ? dims_per_feature(inst.shape) : 0;

  std::vector<float> scores(count);
  std::vector<double> occluded = x;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t lo = i >= left ? i - left : 0;
    const std::size_t hi = std::min(count - 1, i + window / 2);
    for (std::size_t f = lo; f <= hi; ++f) {
      if (feat.kind == Featurizer::Kind::raw) {
        for (uint32_t ch = 0; ch < dpf; ++ch) occluded[f * dpf + ch] = baseline[f * dpf + ch];
      } else {
        occluded[slots[f]] -= 1.0;
      }
    }
    scores[i] = static_cast<float>(p0 - model.probabilities(occluded)[c]);
    for (std::size_t f = lo; f <= hi; ++f) {  // restore
      if (feat.kind == Featurizer::Kind::raw) {
        for (uint32_t ch = 0; ch < dpf; ++ch) occluded[f * dpf + ch] = x[f * dpf + ch];
      } else {
        occluded[slots[f]] += 1.0;
      }
    }
  }
  return AttributionMap{inst.id, std::move(scores)};
}

std::vector<double> exact_shapley_groups(const RefModel& model, const Instance& inst,
                                         const Featurizer& feat,
                                         const std::vector<FeatureSet>& groups,
                                         const std::vector<double>& baseline) {
  model.validate();
  check_baseline(feat, baseline);
  const std::size_t count = inst.shape.feature_count();
  const std::size_t g_count = groups.size();
  if (g_count == 0) throw ValidationError("exact Shapley needs at least one group");
  if (g_count > 20) {
    throw ValidationError("exact Shapley enumerates 2^G coalitions; " +
                          std::to_string(g_count) + " groups exceed the limit of 20");
  }
  std::vector<int> owner(count, -1);
  for (std::size_t g = 0; g < g_count; ++g) {
    for (uint32_t f : groups[g].indices()) {
      if (f >= count) {
        throw ValidationError("group feature index " + std::to_string(f) +
                              " is outside the instance");
      }
      if (owner[f] != -1) throw ValidationError("groups overlap at feature " + std::to_string(f));
      owner[f] = static_cast<int>(g);
    }
  }
  for (std::size_t f = 0; f < count; ++f) {
    if (owner[f] == -1) {
      throw ValidationError("groups do not cover feature " + std::to_string(f));
    }
  }

  const std::vector<double> x = featurize(inst, feat);
  const uint32_t c = static_cast<uint32_t>(model.predict(x));
  std::vector<uint32_t> slots;
  if (feat.kind == Featurizer::Kind::positional_bow) slots = bow_slots(inst, feat.vocab);
  const uint32_t dpf =
      feat.kind == Featurizer::Kind::raw ? dims_per_feature(inst.shape) : 0;

  const std::size_t masks = std::size_t{1} << g_count;
  std::vector<double> value(masks);
  std::vector<double> coalition(x.size());
  for (std::size_t mask = 0; mask < masks; ++mask) {
    if (feat.kind == Featurizer::Kind::raw) {
      coalition = baseline;
    } else {
      std::fill(coalition.begin(), coalition.end(), 0.0);
    }
    for (std::size_t f = 0; f < count; ++f) {
      if (!(mask >> owner[f] & 1)) continue;
      if (feat.kind == Featurizer::Kind::raw) {
        for (uint32_t ch = 0; ch < dpf; ++ch) coalition[f * dpf + ch] = x[f * dpf + ch];
      } else {
        coalition[slots[f]] += 1.0;
      }
    }
    value[mask] = model.probabilities(coalition)[c];
  }

  // w(s) = s! (G-1-s)! / G! = 1 / (G * C(G-1, s)), exact in 64-bit for G <= 20.
  std::vector<uint64_t> choose(g_count, 1);
  for (std::size_t s = 1; s < g_count; ++s) {
    choose[s] = choose[s - 1] * (g_count - s) / s;
  }
  std::vector<double> weight(g_count);
  for (std::size_t s = 0; s < g_count; ++s) {
    weight[s] = 1.0 / (static_cast<double>(g_count) * static_cast<double>(choose[s]));
  }

  std::vector<double> phi(g_count, 0.0);
  for (std::size_t mask = 0; mask < masks; ++mask) {
    const int size = std::popcount(mask);
    for (std::size_t g = 0; g < g_count; ++g) {
      if (mask >> g & 1) continue;
      phi[g] += weight[static_cast<std::size_t>(size)] *
                (value[mask | std::size_t{1} << g] - value[mask]);
    }
  }
  return phi;
}

std::vector<double> mean_baseline(const Dataset& data, const Featurizer& feat) {
  feat.validate();
  if (feat.kind == Featurizer::Kind::positional_bow) return {};
  if (data.instances.empty()) throw ValidationError("cannot average an empty dataset");
  std::vector<double> mean(feat.input_dim(), 0.0);
  for (const Instance& inst : data.instances) {
    const std::vector<double> x = featurize(inst, feat);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += x[j];
  }
  const double n = static_cast<double>(data.instances.size());
  for (double& v : mean) v /= n;
  return mean;
}

namespace {

constexpr char kModelMagic[4] = {'A', 'T', 'R', 'M'};
constexpr uint32_t kModelVersion = 1;

void put_array(std::string& out, const std::vector<double>& v) {
  io::put_u64(out, v.size());
  for (double x : v) io::put_f64(out, x);
}

std::vector<double> read_array(io::Reader& r, std::size_t expected, const char* what) {
  const uint64_t n = r.u64();
  if (n != expected) {
    throw IoError(std::string("model file is corrupt: ") + what + " holds " +
                      std::to_string(n) + " values, expected " + std::to_string(expected),
                  r.path());
  }
  std::vector<double> v(expected);
  for (double& x : v) x = r.f64();
  return v;
}

}  // namespace

void save_model(const RefModel& model, const std::string& path) {
  model.validate();
  std::string out;
  out.append(kModelMagic, sizeof(kModelMagic));
  io::put_u32(out, kModelVersion);
  io::put_u32(out, model.kind == RefModel::Kind::linear ? 0u : 1u);
  io::put_u32(out, model.input_dim);
  io::put_u32(out, model.num_classes);
  io::put_u32(out, model.hidden);
  put_array(out, model.hidden_w);
  put_array(out, model.hidden_b);
  put_array(out, model.out_w);
  put_array(out, model.out_b);
  io::write_file(path, out);

  nlohmann::ordered_json side{
      {"format", "ATRM"},
      {"version", kModelVersion},
      {"kind", model.kind == RefModel::Kind::linear ? "linear" : "mlp"},
      {"input_dim", model.input_dim},
      {"num_classes", model.num_classes},
      {"hidden", model.hidden},
  };
  io::write_file(path + ".json", side.dump(2) + "\n");
}

RefModel load_model(const std::string& path) {
  io::Reader r(io::read_file(path), path);
  if (r.bytes(4) != std::string(kModelMagic, sizeof(kModelMagic))) {
    throw IoError("not a model file: bad magic", path);
  }
  const uint32_t version = r.u32();
  if (version != kModelVersion) {
    throw IoError("unsupported model version " + std::to_string(version), path);
  }
  const uint32_t kind = r.u32();
  if (kind > 1) throw IoError("model file is corrupt: unknown kind", path);

  RefModel m;
  m.kind = kind == 0 ? RefModel::Kind::linear : RefModel::Kind::mlp;
  m.input_dim = r.u32();
  m.num_classes = r.u32();
  m.hidden = r.u32();
  const std::size_t out_width = m.kind == RefModel::Kind::linear ? m.input_dim : m.hidden;
  m.hidden_w = read_array(r, static_cast<std::size_t>(m.hidden) * m.input_dim, "hidden_w");
  m.hidden_b = read_array(r, m.hidden, "hidden_b");
  m.out_w = read_array(r, static_cast<std::size_t>(m.num_classes) * out_width, "out_w");
  m.out_b = read_array(r, m.num_classes, "out_b");
  if (!r.at_end()) throw IoError("model file is corrupt: trailing bytes", path);
  m.validate();
  return m;
}

}  // namespace atgt::refmodels
