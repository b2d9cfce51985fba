#include "atgt/core.hpp"

#include <algorithm>
#include <cmath>

#include "atgt/errors.hpp"

namespace atgt {

Shape Shape::image(uint32_t h, uint32_t w, uint32_t c) {
  Shape s;
  s.kind = Kind::image;
  s.h = h;
  s.w = w;
  s.c = c;
  return s;
}

Shape Shape::text(uint32_t tokens) {
  Shape s;
  s.kind = Kind::text;
  s.length = tokens;
  return s;
}

Shape Shape::flat(uint32_t n) {
  Shape s;
  s.kind = Kind::flat;
  s.length = n;
  return s;
}

uint64_t Shape::raw_size() const {
  switch (kind) {
    case Kind::image: return static_cast<uint64_t>(h) * w * c;
    case Kind::text: return length;
    case Kind::flat: return length;
  }
  return 0;
}

uint64_t Shape::feature_count() const {
  switch (kind) {
    case Kind::image: return static_cast<uint64_t>(h) * w;
    case Kind::text: return length;
    case Kind::flat: return length;
  }
  return 0;
}

EffectiveRegion::EffectiveRegion(std::vector<uint32_t> sorted_indices)
    : indices_(std::move(sorted_indices)) {
  for (std::size_t i = 1; i < indices_.size(); ++i) {
    if (indices_[i - 1] >= indices_[i]) {
      throw ValidationError("effective region indices must be strictly increasing");
    }
  }
}

EffectiveRegion EffectiveRegion::from_unsorted(std::vector<uint32_t> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  EffectiveRegion er;
  er.indices_ = std::move(indices);
  return er;
}

bool EffectiveRegion::contains(uint32_t index) const {
  return std::binary_search(indices_.begin(), indices_.end(), index);
}

EffectiveRegion joint_effective_region(const std::vector<EffectiveRegion>& regions) {
  std::vector<uint32_t> all;
  for (const auto& region : regions) {
    all.insert(all.end(), region.indices().begin(), region.indices().end());
  }
  return EffectiveRegion::from_unsorted(std::move(all));
}

ReassignmentMatrix::ReassignmentMatrix(uint32_t k, std::vector<double> row_major)
    : k_(k), rows_(std::move(row_major)) {
  if (k_ == 0) throw ValidationError("reassignment matrix needs at least one class");
  if (rows_.size() != static_cast<std::size_t>(k_) * k_) {
    throw ValidationError("reassignment matrix must be K x K");
  }
  for (uint32_t i = 0; i < k_; ++i) {
    double sum = 0.0;
    for (uint32_t j = 0; j < k_; ++j) {
      const double v = at(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("reassignment matrix entries must lie in [0,1]");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError("reassignment matrix rows must sum to 1");
    }
  }
}

ReassignmentMatrix ReassignmentMatrix::binary(double r) {
  return ReassignmentMatrix(2, {r, 1.0 - r, 1.0 - r, r});
}

void Instance::validate(uint32_t k) const {
  if (features.size() != shape.raw_size()) {
    throw ValidationError("instance '" + id + "': feature length does not match shape");
  }
  if (y_orig < 0 || static_cast<uint32_t>(y_orig) >= k ||
      y_hat < 0 || static_cast<uint32_t>(y_hat) >= k) {
    throw ValidationError("instance '" + id + "': label out of range");
  }
  const uint64_t d = shape.feature_count();
  auto check_region = [&](const EffectiveRegion& region, const char* name) {
    if (!region.empty() && region.indices().back() >= d) {
      throw ValidationError("instance '" + id + "': " + name + " index out of range");
    }
  };
  check_region(er, "er");
  check_region(corr, "corr");
  check_region(noncorr, "noncorr");
  if (shape.kind == Shape::Kind::image || shape.kind == Shape::Kind::flat) {
    for (float v : features) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw ValidationError("instance '" + id + "': feature values must lie in [0,1]");
      }
    }
  } else {
    for (float v : features) {
      if (v < 0.0f || v != std::floor(v)) {
        throw ValidationError("instance '" + id + "': token ids must be non-negative integers");
      }
    }
  }
}

void GroundTruthSpec::validate() const {
  for (uint32_t idx : f_n.indices()) {
    if (f_c.contains(idx)) {
      throw ValidationError("ground truth sets F_C and F_N must be disjoint");
    }
  }
}

}  // namespace atgt
