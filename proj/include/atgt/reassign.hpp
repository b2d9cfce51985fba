#pragma once

#include <cstdint>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::reassign {

struct ReassignConfig {
  ReassignmentMatrix matrix;
  uint64_t seed = 0;
};

// Samples each new label from row y_i of the matrix using the stream derived
// from (seed, "reassign", i). Element i's result depends only on that triple,
// so splitting or reordering the sequence cannot change it.
std::vector<int> reassign_labels(const std::vector<int>& labels, const ReassignConfig& cfg);

// Accuracy cap after reassignment: the largest matrix entry. No classifier
// that ignores the manipulations can beat this in expectation.
double max_achievable_accuracy(const ReassignmentMatrix& matrix);

// First term index of the upper tail for observed accuracy p on n trials:
// floor(p*n), with p*n snapped to the nearest integer when it lands within
// relative 1e-9 of one. The snap keeps inputs like p=0.95, n=500 at 475
// even though the closest double to 0.95 times 500 falls a hair below it.
uint64_t tail_start_index(uint64_t n, double p);

// P[X >= tail_start_index(n, p)] for X ~ Binom(n, p_star): the probability
// that a model capped at accuracy p_star reaches observed accuracy p by
// chance. Relative error <= 1e-10 for n <= 100,000 whenever the result is
// representable as a normal double.
double significance_probability(uint64_t n, double p_star, double p);

}  // namespace atgt::reassign
