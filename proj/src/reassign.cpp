#include "atgt/reassign.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "atgt/errors.hpp"
#include "atgt/rng.hpp"

namespace atgt::reassign {

namespace {

// Last class with positive probability in the row, for the (FP-only) case
// where the uniform draw lands beyond the accumulated row sum.
int last_supported(const ReassignmentMatrix& m, uint32_t row) {
  for (uint32_t j = m.k(); j-- > 0;) {
    if (m.at(row, j) > 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(m.k()) - 1;
}

}  // namespace

std::vector<int> reassign_labels(const std::vector<int>& labels, const ReassignConfig& cfg) {
  const auto& m = cfg.matrix;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<uint32_t>(y) >= m.k()) {
      throw ValidationError("label " + std::to_string(y) + " at index " + std::to_string(i) +
                            " out of range for k=" + std::to_string(m.k()));
    }
    Stream stream(cfg.seed, "reassign", i);
    const double u = stream.next_double();
    double acc = 0.0;
    int picked = -1;
    for (uint32_t j = 0; j < m.k(); ++j) {
      acc += m.at(static_cast<uint32_t>(y), j);
      if (u < acc) {
        picked = static_cast<int>(j);
        break;
      }
    }
    out[i] = picked >= 0 ? picked : last_supported(m, static_cast<uint32_t>(y));
  }
  return out;
}

double max_achievable_accuracy(const ReassignmentMatrix& matrix) {
  double best = 0.0;
  for (uint32_t i = 0; i < matrix.k(); ++i) {
    for (uint32_t j = 0; j < matrix.k(); ++j) best = std::max(best, matrix.at(i, j));
  }
  return best;
}

uint64_t tail_start_index(uint64_t n, double p) {
  const double x = p * static_cast<double>(n);
  const double nearest = std::nearbyint(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(nearest))) {
    return static_cast<uint64_t>(nearest);
  }
  return static_cast<uint64_t>(std::floor(x));
}

namespace {

// ln C(n, k) via the short side of the product, Kahan-summed. Each factor
// (n-s+j)/j stays in a modest range, so the absolute error in the log grows
// only with the term count, not with the magnitude of the coefficient.
double log_choose(uint64_t n, uint64_t k) {
  const uint64_t s = std::min(k, n - k);
  double sum = 0.0, comp = 0.0;
  for (uint64_t j = 1; j <= s; ++j) {
    const double term =
        std::log(static_cast<double>(n - s + j) / static_cast<double>(j));
    const double y = term - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// Pairwise sum of positive terms generated by a ratio recurrence starting at
// 1.0. count is capped by the caller; generation stops early once a term can
// no longer move the running result.
double pairwise_sum(const std::vector<double>& terms, std::size_t lo, std::size_t hi) {
  const std::size_t n = hi - lo;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += terms[i];
    return s;
  }
  const std::size_t mid = lo + n / 2;
  return pairwise_sum(terms, lo, mid) + pairwise_sum(terms, mid, hi);
}

}  // namespace

double significance_probability(uint64_t n, double p_star, double p) {
  if (n < 1) throw ValidationError("significance_probability: n must be >= 1");
  if (!(p_star >= 0.0 && p_star <= 1.0)) {
    throw ValidationError("significance_probability: p_star must lie in [0, 1]");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("significance_probability: p must lie in [0, 1]");
  }

  const uint64_t m = tail_start_index(n, p);
  if (m == 0) return 1.0;
  if (m > n) return 0.0;
  if (p_star <= 0.0) return 0.0;  // all mass at 0, m >= 1
  if (p_star >= 1.0) return 1.0;  // all mass at n, m <= n

  // Mode of Binom(n, p_star); terms decrease strictly moving away from it.
  const uint64_t mode =
      std::min<uint64_t>(n, static_cast<uint64_t>(std::floor(
                                (static_cast<double>(n) + 1.0) * p_star)));

  const bool upper_direct = m > mode;
  // Start index of the directly summed monotone tail.
  const uint64_t start = upper_direct ? m : m - 1;

  const double log_start = log_choose(n, start) +
                           static_cast<double>(start) * std::log(p_star) +
                           static_cast<double>(n - start) * std::log1p(-p_star);

  // Scaled terms: first term is 1.0, subsequent terms follow the pmf ratio.
  // Generation stops once a term falls below eps of the running total, which
  // bounds the vector at O(sqrt(n)) entries away from the mode.
  std::vector<double> terms;
  terms.push_back(1.0);
  double running = 1.0;
  double term = 1.0;
  if (upper_direct) {
    for (uint64_t k = start; k < n; ++k) {
      term *= (static_cast<double>(n - k) * p_star) /
              (static_cast<double>(k + 1) * (1.0 - p_star));
      if (term < running * 1e-18) break;
      terms.push_back(term);
      running += term;
    }
  } else {
    for (uint64_t k = start; k > 0; --k) {
      term *= (static_cast<double>(k) * (1.0 - p_star)) /
              (static_cast<double>(n - k + 1) * p_star);
      if (term < running * 1e-18) break;
      terms.push_back(term);
      running += term;
    }
  }

  const double scaled = pairwise_sum(terms, 0, terms.size());
  const double tail = std::exp(log_start + std::log(scaled));
  if (upper_direct) return std::min(tail, 1.0);
  return std::max(0.0, 1.0 - tail);
}

}  // namespace atgt::reassign
