#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace atgt {

// Feature layout of one instance. Images use pixel granularity for
// attribution: all channels of a pixel share one feature index, so the
// attribution dimension is h*w while the raw blob holds h*w*c floats.
struct Shape {
  enum class Kind { flat, image, text };

  Kind kind = Kind::flat;
  uint32_t h = 0, w = 0, c = 0;  // image
  uint32_t length = 0;           // flat feature count or text token count

  static Shape image(uint32_t h, uint32_t w, uint32_t c = 3);
  static Shape text(uint32_t tokens);
  static Shape flat(uint32_t n);

  // Number of raw values stored in the feature blob.
  uint64_t raw_size() const;
  // Number of attributable features (pixels for images, tokens for text).
  uint64_t feature_count() const;

  bool operator==(const Shape&) const = default;
};

// Strictly increasing set of feature indices a manipulation modifies (or may
// modify). The blank manipulation has an empty region.
class EffectiveRegion {
 public:
  EffectiveRegion() = default;

  // Requires strictly increasing indices.
  explicit EffectiveRegion(std::vector<uint32_t> sorted_indices);

  // Sorts and deduplicates.
  static EffectiveRegion from_unsorted(std::vector<uint32_t> indices);

  const std::vector<uint32_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  bool contains(uint32_t index) const;

  bool operator==(const EffectiveRegion&) const = default;

 private:
  std::vector<uint32_t> indices_;
};

using FeatureSet = EffectiveRegion;

// Sorted union of the given regions. Union over ALL manipulations in the
// manipulation set, including those mapped to other classes: a model may use
// the absence of a manipulation, so every possibly-modified feature counts.
EffectiveRegion joint_effective_region(const std::vector<EffectiveRegion>& regions);

// Row-stochastic K x K matrix governing label reassignment.
class ReassignmentMatrix {
 public:
  ReassignmentMatrix(uint32_t k, std::vector<double> row_major);

  // [[r, 1-r], [1-r, r]]: keep the label with probability r, flip otherwise.
  static ReassignmentMatrix binary(double r);

  uint32_t k() const { return k_; }
  double at(uint32_t row, uint32_t col) const { return rows_[row * k_ + col]; }
  const std::vector<double>& row_major() const { return rows_; }

 private:
  uint32_t k_ = 0;
  std::vector<double> rows_;
};

// One example. Instances are immutable values after construction; they carry
// their own effective region so stochastic manipulations stay reproducible
// after serialization.
struct Instance {
  std::string id;
  Shape shape;
  std::vector<float> features;  // raw values, length == shape.raw_size()
  int y_orig = 0;
  int y_hat = 0;
  std::string manip_id;  // empty for the blank manipulation
  EffectiveRegion er;
  // Text ground truth: correlating / label-independent token positions.
  EffectiveRegion corr;
  EffectiveRegion noncorr;
  std::string split;  // train | val | test (empty if unassigned)

  // Throws ValidationError when a field violates an invariant.
  void validate(uint32_t k) const;
};

// Per-feature signed scores aligned with one instance's attributable
// features (pixels for images, tokens for text). Stored as float32 to match
// the exchange format exactly.
struct AttributionMap {
  std::string instance_id;
  std::vector<float> scores;
};

// The two ground-truth feature sets of an evaluation: F_C (correlating,
// guaranteed-informative) and F_N (manipulated but label-independent).
struct GroundTruthSpec {
  EffectiveRegion f_c;
  EffectiveRegion f_n;

  void validate() const;  // f_c and f_n must be disjoint
};

// A dataset: instances plus the dataset-level facts the manifest records.
struct Dataset {
  uint32_t k = 2;
  std::vector<Instance> instances;
  EffectiveRegion joint_er;
  double p_star = 1.0;
  uint64_t seed = 0;
  uint64_t skipped = 0;  // source items dropped during construction
  std::string skip_reason;
};

}  // namespace atgt
