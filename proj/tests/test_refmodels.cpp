#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "atgt/core.hpp"
#include "atgt/errors.hpp"
#include "atgt/io.hpp"
#include "atgt/refmodels.hpp"
#include "atgt/rng.hpp"
#include "json.hpp"

using namespace atgt;
using namespace atgt::refmodels;

namespace {

Instance make_flat(std::string id, std::vector<float> values, int y = 0,
                   std::string split = "") {
  Instance inst;
  inst.id = std::move(id);
  inst.shape = Shape::flat(static_cast<uint32_t>(values.size()));
  inst.features = std::move(values);
  inst.y_orig = inst.y_hat = y;
  inst.split = std::move(split);
  return inst;
}

Instance make_text(std::string id, std::vector<uint32_t> tokens, int y = 0) {
  Instance inst;
  inst.id = std::move(id);
  inst.shape = Shape::text(static_cast<uint32_t>(tokens.size()));
  inst.features.reserve(tokens.size());
  for (uint32_t t : tokens) inst.features.push_back(static_cast<float>(t));
  inst.y_orig = inst.y_hat = y;
  return inst;
}

Instance make_image(std::string id, uint32_t h, uint32_t w, std::vector<float> values) {
  Instance inst;
  inst.id = std::move(id);
  inst.shape = Shape::image(h, w);
  inst.features = std::move(values);
  return inst;
}

RefModel random_linear(Stream& s, uint32_t d, uint32_t k) {
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = d;
  m.num_classes = k;
  m.out_w.resize(static_cast<std::size_t>(k) * d);
  m.out_b.resize(k);
  for (double& v : m.out_w) v = s.next_gaussian();
  for (double& v : m.out_b) v = 0.25 * s.next_gaussian();
  return m;
}

RefModel random_mlp(Stream& s, uint32_t d, uint32_t hidden, uint32_t k) {
  RefModel m;
  m.kind = RefModel::Kind::mlp;
  m.input_dim = d;
  m.num_classes = k;
  m.hidden = hidden;
  m.hidden_w.resize(static_cast<std::size_t>(hidden) * d);
  m.hidden_b.resize(hidden);
  m.out_w.resize(static_cast<std::size_t>(k) * hidden);
  m.out_b.resize(k);
  for (double& v : m.hidden_w) v = s.next_gaussian() / std::sqrt(double(d));
  for (double& v : m.hidden_b) v = 0.1 * s.next_gaussian();
  for (double& v : m.out_w) v = s.next_gaussian() / std::sqrt(double(hidden));
  for (double& v : m.out_b) v = 0.1 * s.next_gaussian();
  return m;
}

bool same_scores(const AttributionMap& a, const AttributionMap& b) {
  if (a.scores.size() != b.scores.size()) return false;
  for (std::size_t i = 0; i < a.scores.size(); ++i) {
    if (std::bit_cast<uint32_t>(a.scores[i]) != std::bit_cast<uint32_t>(b.scores[i])) {
      return false;
    }
  }
  return true;
}

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("atgt-refmodels-" + std::to_string(getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("featurizer dimensions and validation") {
  const Featurizer img = Featurizer::raw(Shape::image(4, 5));
  CHECK(img.input_dim() == 60);
  const Featurizer flat = Featurizer::raw(Shape::flat(7));
  CHECK(flat.input_dim() == 7);
  const Featurizer bow = Featurizer::positional_bow(11);
  CHECK(bow.input_dim() == 22);

  CHECK_THROWS_AS(Featurizer::raw(Shape::text(5)), ValidationError);
  CHECK_THROWS_AS(Featurizer::raw(Shape::flat(0)), ValidationError);
  CHECK_THROWS_AS(Featurizer::positional_bow(0), ValidationError);
}

TEST_CASE("positional bag of words counts tokens per half") {
  const uint32_t v = 6;
  const Featurizer feat = Featurizer::positional_bow(v);
  // Length 5 splits as [0,2) and [2,5).
  const Instance inst = make_text("t", {2, 0, 2, 1, 5});
  const std::vector<double> x = featurize(inst, feat);
  REQUIRE(x.size() == 12);
  std::vector<double> want(12, 0.0);
  want[2] = 1.0;
  want[0] = 1.0;
  want[v + 2] = 1.0;
  want[v + 1] = 1.0;
  want[v + 5] = 1.0;
  CHECK(x == want);

  // Duplicates accumulate.
  const std::vector<double> dup = featurize(make_text("d", {3, 3, 3, 3}), feat);
  CHECK(dup[3] == 2.0);
  CHECK(dup[v + 3] == 2.0);

  Instance bad = make_text("b", {1, 2});
  bad.features[0] = 1.5f;
  CHECK_THROWS_AS(featurize(bad, feat), ValidationError);
  CHECK_THROWS_AS(featurize(make_text("o", {1, v}), feat), ValidationError);
  CHECK_THROWS_AS(featurize(make_flat("f", {1.0f}), feat), ValidationError);
}

TEST_CASE("raw featurizer centers values and checks the shape") {
  const Featurizer feat = Featurizer::raw(Shape::flat(3));
  const std::vector<double> x = featurize(make_flat("a", {1.0f, -2.0f, 0.5f}), feat);
  CHECK(x == std::vector<double>{0.5, -2.5, 0.0});
  CHECK_THROWS_AS(featurize(make_flat("b", {1.0f, 2.0f}), feat), ValidationError);
  CHECK_THROWS_AS(featurize(make_text("t", {0, 1, 2}), feat), ValidationError);
}

TEST_CASE("linear model forward pass by hand") {
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = 2;
  m.num_classes = 2;
  m.out_w = {1.0, 0.0, 0.0, 1.0};
  m.out_b = {0.0, 0.0};
  m.validate();

  const std::vector<double> l = m.logits({3.0, 1.0});
  CHECK(l == std::vector<double>{3.0, 1.0});
  CHECK(m.predict({3.0, 1.0}) == 0);
  CHECK(m.predict({1.0, 3.0}) == 1);
  CHECK(m.predict({2.0, 2.0}) == 0);  // tie goes to the lowest class

  const std::vector<double> p = m.probabilities({3.0, 1.0});
  const double e = std::exp(2.0);
  CHECK(p[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-14));

  CHECK_THROWS_AS(m.logits({1.0, 2.0, 3.0}), ValidationError);
}

TEST_CASE("probabilities are a distribution even for extreme logits") {
  Stream s(11, "probs");
  for (int trial = 0; trial < 50; ++trial) {
    const uint32_t d = 2 + uint32_t(s.next_below(6));
    const uint32_t k = 2 + uint32_t(s.next_below(3));
    RefModel m = trial % 2 == 0 ? random_linear(s, d, k) : random_mlp(s, d, 4, k);
    std::vector<double> x(d);
    for (double& v : x) v = 100.0 * s.next_gaussian();
    const std::vector<double> p = m.probabilities(x);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("model validation rejects inconsistent parameter blocks") {
  Stream s(3, "validate");
  RefModel m = random_mlp(s, 4, 3, 2);
  CHECK_NOTHROW(m.validate());

  RefModel wrong = m;
  wrong.out_w.pop_back();
  CHECK_THROWS_AS(wrong.validate(), ValidationError);

  wrong = m;
  wrong.hidden = 0;
  CHECK_THROWS_AS(wrong.validate(), ValidationError);

  wrong = m;
  wrong.hidden_b[0] = std::nan("");
  CHECK_THROWS_AS(wrong.validate(), ValidationError);

  RefModel lin = random_linear(s, 4, 2);
  CHECK_NOTHROW(lin.validate());
  lin.hidden_w = {1.0};
  CHECK_THROWS_AS(lin.validate(), ValidationError);
}

TEST_CASE("linear gradient attribution folds channels per pixel") {
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = 6;
  m.num_classes = 2;
  m.out_w = {0.5, -0.25, 1.0, 2.0, -3.0, 0.5,   // class 0
             0.0, 0.0,   0.0, 0.0, 0.0,  0.0};  // class 1
  m.out_b = {1.0, 0.0};                         // class 0 predicted everywhere
  const Instance inst = make_image("i", 1, 2, {0.f, 0.f, 0.f, 0.f, 0.f, 0.f});
  const Featurizer feat = Featurizer::raw(Shape::image(1, 2));

  const AttributionMap map = grad_attribution(m, inst, feat);
  REQUIRE(map.scores.size() == 2);
  CHECK(map.instance_id == "i");
  CHECK(map.scores[0] == doctest::Approx(1.75));
  CHECK(map.scores[1] == doctest::Approx(5.5));
}

TEST_CASE("bag-of-words gradient reads each position's count slot") {
  const uint32_t v = 4;
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = 2 * v;
  m.num_classes = 2;
  m.out_w.assign(2 * m.input_dim, 0.0);
  // Predicted class 0 weights: first-half token 1 -> 0.5, second-half token 3 -> -2.
  m.out_w[1] = 0.5;
  m.out_w[v + 3] = -2.0;
  m.out_b = {1.0, 0.0};

  const Instance inst = make_text("t", {1, 1, 3, 0});
  const AttributionMap map = grad_attribution(m, inst, Featurizer::positional_bow(v));
  REQUIRE(map.scores.size() == 4);
  CHECK(map.scores[0] == doctest::Approx(0.5));  // duplicate slots share the gradient
  CHECK(map.scores[1] == doctest::Approx(0.5));
  CHECK(map.scores[2] == doctest::Approx(2.0));
  CHECK(map.scores[3] == doctest::Approx(0.0));
}

TEST_CASE("gradients match central finite differences on random models") {
  // Criterion: max abs error below 1e-5 across 100 random hidden-layer models.
  const double eps = 1e-4;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Stream s(uint64_t(trial), "fdcheck");
    const uint32_t d = 3 + uint32_t(s.next_below(8));
    const uint32_t hidden = 1 + uint32_t(s.next_below(6));
    const uint32_t k = 2 + uint32_t(s.next_below(2));
    const RefModel m = random_mlp(s, d, hidden, k);

    std::vector<float> values(d);
    for (float& f : values) f = float(s.next_gaussian());
    const Instance inst = make_flat("fd", values);
    const Featurizer feat = Featurizer::raw(Shape::flat(d));

    std::vector<double> x = featurize(inst, feat);
    const uint32_t c = uint32_t(m.predict(x));
    const AttributionMap map = grad_attribution(m, inst, feat);
    REQUIRE(map.scores.size() == d);

    for (uint32_t j = 0; j < d; ++j) {
      std::vector<double> hi = x, lo = x;
      hi[j] += eps;
      lo[j] -= eps;
      const double fd = (m.logits(hi)[c] - m.logits(lo)[c]) / (2.0 * eps);
      worst = std::max(worst, std::fabs(std::fabs(fd) - double(map.scores[j])));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("image gradients match finite differences after channel folding") {
  const double eps = 1e-4;
  for (int trial = 0; trial < 10; ++trial) {
    Stream s(uint64_t(trial), "fdimage");
    const uint32_t h = 2, w = 3;
    const RefModel m = random_mlp(s, h * w * 3, 5, 2);
    std::vector<float> values(h * w * 3);
    for (float& f : values) f = float(s.next_double());
    const Instance inst = make_image("fi", h, w, values);
    const Featurizer feat = Featurizer::raw(Shape::image(h, w));

    const std::vector<double> x = featurize(inst, feat);
    const uint32_t c = uint32_t(m.predict(x));
    const AttributionMap map = grad_attribution(m, inst, feat);
    REQUIRE(map.scores.size() == h * w);

    for (uint32_t pix = 0; pix < h * w; ++pix) {
      double folded = 0.0;
      for (uint32_t ch = 0; ch < 3; ++ch) {
        std::vector<double> hi = x, lo = x;
        hi[pix * 3 + ch] += eps;
        lo[pix * 3 + ch] -= eps;
        folded += std::fabs((m.logits(hi)[c] - m.logits(lo)[c]) / (2.0 * eps));
      }
      CHECK(double(map.scores[pix]) == doctest::Approx(folded).epsilon(1e-5));
    }
  }
}

TEST_CASE("smoothgrad equals the plain gradient on linear models bit for bit") {
  Stream s(21, "sglinear");
  const RefModel img_model = random_linear(s, 2 * 2 * 3, 2);
  std::vector<float> values(12);
  for (float& f : values) f = float(s.next_double());
  const Instance img = make_image("img", 2, 2, values);
  const Featurizer img_feat = Featurizer::raw(Shape::image(2, 2));

  const AttributionMap plain = grad_attribution(img_model, img, img_feat);
  for (uint32_t n : {1u, 7u, 50u}) {
    for (uint64_t seed : {0ull, 123ull}) {
      CHECK(same_scores(plain, smoothgrad(img_model, img, img_feat, n, 0.15, seed)));
    }
  }

  const uint32_t v = 5;
  const RefModel bow_model = random_linear(s, 2 * v, 2);
  const Instance text = make_text("txt", {0, 4, 2, 2, 1});
  const Featurizer bow = Featurizer::positional_bow(v);
  CHECK(same_scores(grad_attribution(bow_model, text, bow),
                    smoothgrad(bow_model, text, bow, 25, 0.15, 9)));
}

TEST_CASE("smoothgrad with zero noise equals the plain gradient on any model") {
  Stream s(22, "sgzero");
  const RefModel m = random_mlp(s, 6, 4, 2);
  std::vector<float> values(6);
  for (float& f : values) f = float(s.next_gaussian());
  const Instance inst = make_flat("z", values);
  const Featurizer feat = Featurizer::raw(Shape::flat(6));
  CHECK(same_scores(grad_attribution(m, inst, feat), smoothgrad(m, inst, feat, 10, 0.0, 5)));
}

TEST_CASE("smoothgrad is seeded and seed-sensitive") {
  Stream s(23, "sgseed");
  const RefModel m = random_mlp(s, 5, 4, 2);
  std::vector<float> values(5);
  for (float& f : values) f = float(s.next_gaussian());
  const Instance inst = make_flat("s", values);
  const Featurizer feat = Featurizer::raw(Shape::flat(5));

  const AttributionMap a = smoothgrad(m, inst, feat, 20, 0.2, 7);
  const AttributionMap b = smoothgrad(m, inst, feat, 20, 0.2, 7);
  const AttributionMap c = smoothgrad(m, inst, feat, 20, 0.2, 8);
  CHECK(same_scores(a, b));
  CHECK(!same_scores(a, c));

  CHECK_THROWS_AS(smoothgrad(m, inst, feat, 0, 0.2, 7), ValidationError);
  CHECK_THROWS_AS(smoothgrad(m, inst, feat, 10, -0.1, 7), ValidationError);
}

TEST_CASE("smoothgrad averages toward the expected map as n grows") {
  Stream s(24, "sgvar");
  const RefModel m = random_mlp(s, 4, 5, 2);
  std::vector<float> values(4);
  for (float& f : values) f = float(s.next_gaussian());
  const Instance inst = make_flat("v", values);
  const Featurizer feat = Featurizer::raw(Shape::flat(4));

  // Spread of single-sample maps across seeds shrinks roughly like 1/sqrt(n)
  // once averaged; compare scatter of n=1 maps against scatter of n=64 maps.
  const auto scatter = [&](uint32_t n) {
    std::vector<AttributionMap> maps;
    for (uint64_t seed = 0; seed < 12; ++seed) {
      maps.push_back(smoothgrad(m, inst, feat, n, 0.3, seed));
    }
    double spread = 0.0;
    for (std::size_t i = 1; i < maps.size(); ++i) {
      for (std::size_t j = 0; j < maps[i].scores.size(); ++j) {
        spread = std::max(spread,
                          double(std::fabs(maps[i].scores[j] - maps[0].scores[j])));
      }
    }
    return spread;
  };
  const double wide = scatter(1);
  const double tight = scatter(64);
  CHECK(tight < wide);
}

TEST_CASE("occlusion ranks features by their margin contribution") {
  Stream s(31, "occl");
  for (int trial = 0; trial < 20; ++trial) {
    const uint32_t d = 4 + uint32_t(s.next_below(5));
    const RefModel m = random_linear(s, d, 2);
    std::vector<float> values(d);
    for (float& f : values) f = float(s.next_gaussian());
    const Instance inst = make_flat("o", values);
    const Featurizer feat = Featurizer::raw(Shape::flat(d));
    std::vector<double> baseline(d);
    for (double& b : baseline) b = s.next_gaussian();

    const AttributionMap map = occlusion_attribution(m, inst, feat, baseline, 1);
    REQUIRE(map.scores.size() == d);

    // For a two-class linear model the probability drop is monotone in the
    // occluded margin change, so score order must match delta order.
    const std::vector<double> x = featurize(inst, feat);
    const uint32_t c = uint32_t(m.predict(x));
    const uint32_t other = 1 - c;
    std::vector<double> delta(d);
    for (uint32_t j = 0; j < d; ++j) {
      delta[j] = (m.out_w[c * d + j] - m.out_w[other * d + j]) * (x[j] - baseline[j]);
    }
    // Scores may tie in float32 when the sigmoid saturates, but they must
    // never contradict the margin ordering, and the map must not collapse.
    std::size_t distinct_pairs = 0;
    for (uint32_t a = 0; a < d; ++a) {
      for (uint32_t b = a + 1; b < d; ++b) {
        const double score_gap = double(map.scores[a]) - double(map.scores[b]);
        CHECK((delta[a] - delta[b]) * score_gap >= 0.0);
        distinct_pairs += score_gap != 0.0;
      }
    }
    CHECK(distinct_pairs > 0);
  }
}

TEST_CASE("occlusion windows cover a centered span and clip at the edges") {
  // Sum model: occluding k features of an all-ones input drops the margin by k.
  const uint32_t d = 6;
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = d;
  m.num_classes = 2;
  m.out_w.assign(2 * d, 0.0);
  for (uint32_t j = 0; j < d; ++j) m.out_w[j] = 1.0;
  m.out_b = {0.0, 0.0};

  const Instance inst = make_flat("w", std::vector<float>(d, 1.0f));
  const Featurizer feat = Featurizer::raw(Shape::flat(d));
  const std::vector<double> zeros(d, 0.0);

  const AttributionMap w3 = occlusion_attribution(m, inst, feat, zeros, 3);
  // Interior windows occlude three features, the clipped edge windows two.
  CHECK(w3.scores[0] == w3.scores[d - 1]);
  CHECK(w3.scores[1] == w3.scores[2]);
  CHECK(w3.scores[0] < w3.scores[1]);

  const AttributionMap w2 = occlusion_attribution(m, inst, feat, zeros, 2);
  // Even windows extend right: the last feature occludes only itself.
  CHECK(w2.scores[d - 1] < w2.scores[0]);

  const AttributionMap w1 = occlusion_attribution(m, inst, feat, zeros, 1);
  for (uint32_t j = 1; j < d; ++j) CHECK(w1.scores[j] == w1.scores[0]);

  CHECK_THROWS_AS(occlusion_attribution(m, inst, feat, zeros, 0), ValidationError);
  CHECK_THROWS_AS(occlusion_attribution(m, inst, feat, std::vector<double>(d - 1, 0.0), 1),
                  ValidationError);
}

TEST_CASE("occlusion removes one token occurrence at a time") {
  const uint32_t v = 3;
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = 2 * v;
  m.num_classes = 2;
  m.out_w.assign(2 * m.input_dim, 0.0);
  m.out_w[0] = 1.0;  // class 0 rewards first-half token 0 counts
  m.out_b = {0.0, 0.0};

  // Two copies of token 0 in the first half.
  const Instance inst = make_text("t", {0, 0, 1, 2});
  const Featurizer feat = Featurizer::positional_bow(v);
  const AttributionMap map = occlusion_attribution(m, inst, feat, {}, 1);
  REQUIRE(map.scores.size() == 4);

  // Removing either copy drops the count 2 -> 1: identical positive scores.
  CHECK(map.scores[0] == map.scores[1]);
  CHECK(map.scores[0] > 0.0f);
  // Second-half tokens carry no weight for either class.
  CHECK(map.scores[2] == 0.0f);
  CHECK(map.scores[3] == 0.0f);

  CHECK_THROWS_AS(occlusion_attribution(m, inst, feat, {0.0, 0.0}, 1), ValidationError);
}

namespace {

// Shapley via direct permutation averaging; independent of the production
// coalition-mask enumeration.
std::vector<double> shapley_by_permutations(const RefModel& m, const std::vector<double>& x,
                                            const std::vector<double>& baseline,
                                            const std::vector<std::vector<uint32_t>>& groups,
                                            uint32_t c) {
  const std::size_t g_count = groups.size();
  std::vector<std::size_t> perm(g_count);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> phi(g_count, 0.0);
  std::size_t n_perms = 0;
  do {
    std::vector<double> input = baseline;
    double prev = m.probabilities(input)[c];
    for (std::size_t g : perm) {
      for (uint32_t f : groups[g]) input[f] = x[f];
      const double cur = m.probabilities(input)[c];
      phi[g] += cur - prev;
      prev = cur;
    }
    ++n_perms;
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (double& v : phi) v /= double(n_perms);
  return phi;
}

}  // namespace

TEST_CASE("exact Shapley matches permutation averaging on random models") {
  for (int trial = 0; trial < 15; ++trial) {
    Stream s(uint64_t(trial), "shapperm");
    const uint32_t d = 5;
    const RefModel m = trial % 2 == 0 ? random_mlp(s, d, 4, 2) : random_linear(s, d, 3);
    std::vector<float> values(d);
    for (float& f : values) f = float(s.next_gaussian());
    const Instance inst = make_flat("p", values);
    const Featurizer feat = Featurizer::raw(Shape::flat(d));
    std::vector<double> baseline(d);
    for (double& b : baseline) b = s.next_gaussian();

    // Partition {0}, {1, 3}, {2, 4}.
    const std::vector<FeatureSet> groups = {FeatureSet({0}), FeatureSet({1, 3}),
                                            FeatureSet({2, 4})};
    const std::vector<double> phi = exact_shapley_groups(m, inst, feat, groups, baseline);

    const std::vector<double> x = featurize(inst, feat);
    const uint32_t c = uint32_t(m.predict(x));
    const std::vector<double> want =
        shapley_by_permutations(m, x, baseline, {{0}, {1, 3}, {2, 4}}, c);
    REQUIRE(phi.size() == 3);
    for (std::size_t g = 0; g < 3; ++g) {
      CHECK(phi[g] == doctest::Approx(want[g]).epsilon(1e-10));
    }
  }
}

TEST_CASE("exact Shapley is efficient, symmetric, and ignores null players") {
  Stream s(41, "shapprops");
  for (int trial = 0; trial < 10; ++trial) {
    const uint32_t d = 6;
    const RefModel m = random_mlp(s, d, 5, 2);
    std::vector<float> values(d);
    for (float& f : values) f = float(s.next_gaussian());
    Instance inst = make_flat("e", values);
    const Featurizer feat = Featurizer::raw(Shape::flat(d));
    std::vector<double> baseline(d);
    for (double& b : baseline) b = s.next_gaussian();

    // Feature 5 sits exactly at the baseline: a null player. The baseline
    // lives in feature space, so undo the raw featurizer's -0.5 shift and
    // re-derive it from the stored float to stay bit-exact.
    inst.features[5] = float(baseline[5] + 0.5);
    baseline[5] = double(inst.features[5]) - 0.5;

    const std::vector<FeatureSet> groups = {FeatureSet({0, 1}), FeatureSet({2}),
                                            FeatureSet({3, 4}), FeatureSet({5})};
    const std::vector<double> phi = exact_shapley_groups(m, inst, feat, groups, baseline);

    const std::vector<double> x = featurize(inst, feat);
    const uint32_t c = uint32_t(m.predict(x));
    const double v_full = m.probabilities(x)[c];
    const double v_none = m.probabilities(baseline)[c];
    const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
    CHECK(total == doctest::Approx(v_full - v_none).epsilon(1e-9));
    CHECK(phi[3] == 0.0);
  }

  // Symmetric groups receive identical values.
  RefModel m;
  m.kind = RefModel::Kind::linear;
  m.input_dim = 2;
  m.num_classes = 2;
  m.out_w = {1.0, 1.0, 0.0, 0.0};
  m.out_b = {0.0, 0.0};
  const Instance inst = make_flat("sym", {0.7f, 0.7f});
  const std::vector<double> phi = exact_shapley_groups(
      m, inst, Featurizer::raw(Shape::flat(2)), {FeatureSet({0}), FeatureSet({1})},
      {0.0, 0.0});
  CHECK(phi[0] == doctest::Approx(phi[1]).epsilon(1e-12));
}

TEST_CASE("exact Shapley works on bag-of-words games") {
  const uint32_t v = 3;
  Stream s(42, "shapbow");
  const RefModel m = random_linear(s, 2 * v, 2);
  const Instance inst = make_text("b", {0, 1, 1, 2});
  const Featurizer feat = Featurizer::positional_bow(v);
  const std::vector<FeatureSet> groups = {FeatureSet({0, 1}), FeatureSet({2, 3})};
  const std::vector<double> phi = exact_shapley_groups(m, inst, feat, groups, {});

  const std::vector<double> x = featurize(inst, feat);
  const uint32_t c = uint32_t(m.predict(x));
  const double v_full = m.probabilities(x)[c];
  const double v_none = m.probabilities(std::vector<double>(2 * v, 0.0))[c];
  CHECK(phi[0] + phi[1] == doctest::Approx(v_full - v_none).epsilon(1e-12));
}

TEST_CASE("exact Shapley validates the partition") {
  Stream s(43, "shapval");
  const RefModel m = random_linear(s, 3, 2);
  const Instance inst = make_flat("v", {1.0f, 2.0f, 3.0f});
  const Featurizer feat = Featurizer::raw(Shape::flat(3));
  const std::vector<double> zeros(3, 0.0);

  CHECK_THROWS_AS(exact_shapley_groups(m, inst, feat, {}, zeros), ValidationError);
  CHECK_THROWS_AS(
      exact_shapley_groups(m, inst, feat, {FeatureSet({0}), FeatureSet({1})}, zeros),
      ValidationError);  // misses feature 2
  CHECK_THROWS_AS(exact_shapley_groups(
                      m, inst, feat, {FeatureSet({0, 1}), FeatureSet({1, 2})}, zeros),
                  ValidationError);  // overlap
  CHECK_THROWS_AS(
      exact_shapley_groups(m, inst, feat, {FeatureSet({0, 1, 2, 3})}, zeros),
      ValidationError);  // out of range

  // 21 groups exceed the enumeration limit.
  const uint32_t big = 21;
  const RefModel wide = random_linear(s, big, 2);
  const Instance wide_inst = make_flat("w", std::vector<float>(big, 0.5f));
  std::vector<FeatureSet> too_many;
  for (uint32_t j = 0; j < big; ++j) too_many.push_back(FeatureSet({j}));
  CHECK_THROWS_AS(exact_shapley_groups(wide, wide_inst, Featurizer::raw(Shape::flat(big)),
                                       too_many, std::vector<double>(big, 0.0)),
                  ValidationError);
}

namespace {

// Linearly separable toy data: label = [x0 > x1], split across train/val/test
// (the validation fifth joins the training split when with_val is false).
Dataset separable_dataset(std::size_t n, uint64_t seed, bool with_val = true) {
  Dataset data;
  data.k = 2;
  data.seed = seed;
  Stream s(seed, "sepdata");
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> x = {float(s.next_gaussian()), float(s.next_gaussian())};
    const int y = x[0] > x[1] ? 1 : 0;
    const char* split =
        i % 5 == 3 ? (with_val ? "val" : "train") : (i % 5 == 4 ? "test" : "train");
    data.instances.push_back(make_flat("s" + std::to_string(i), x, y, split));
  }
  return data;
}

}  // namespace

TEST_CASE("training a linear model separates a separable toy set") {
  const Featurizer feat = Featurizer::raw(Shape::flat(2));
  TrainConfig cfg;
  cfg.learning_rate = 0.25;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.seed = 1;

  // With a validation split the best-validation snapshot comes back; it may
  // predate full convergence on the training fifth it never saw saturate.
  const Dataset data = separable_dataset(250, 77);
  const RefModel m = train(data, feat, cfg);
  CHECK(m.kind == RefModel::Kind::linear);
  CHECK(accuracy(m, data, feat, "train") >= 0.98);
  CHECK(accuracy(m, data, feat, "test") >= 0.98);
  CHECK(accuracy(m, data, feat) >= 0.98);

  const Dataset no_val = separable_dataset(250, 77, false);
  const RefModel full = train(no_val, feat, cfg);
  CHECK(accuracy(full, no_val, feat, "train") >= 0.99);
  CHECK(accuracy(full, no_val, feat, "test") >= 0.98);
}

TEST_CASE("training an mlp solves a task no linear model can") {
  // XOR of the coordinate signs.
  Dataset data;
  data.k = 2;
  Stream s(99, "xordata");
  for (std::size_t i = 0; i < 400; ++i) {
    std::vector<float> x = {float(s.next_gaussian()), float(s.next_gaussian())};
    const int y = (x[0] > 0.0f) != (x[1] > 0.0f) ? 1 : 0;
    data.instances.push_back(make_flat("x" + std::to_string(i), x, y, "train"));
  }
  const Featurizer feat = Featurizer::raw(Shape::flat(2));

  TrainConfig linear_cfg;
  linear_cfg.learning_rate = 0.3;
  linear_cfg.epochs = 40;
  linear_cfg.seed = 2;
  const RefModel lin = train(data, feat, linear_cfg);
  CHECK(accuracy(lin, data, feat, "train") < 0.75);

  TrainConfig mlp_cfg = linear_cfg;
  mlp_cfg.hidden = 12;
  mlp_cfg.epochs = 250;
  const RefModel mlp = train(data, feat, mlp_cfg);
  CHECK(mlp.kind == RefModel::Kind::mlp);
  CHECK(accuracy(mlp, data, feat, "train") >= 0.95);
}

TEST_CASE("random labels train to chance-level held-out accuracy") {
  Dataset data;
  data.k = 2;
  Stream s(1234, "randlabels");
  for (std::size_t i = 0; i < 2000; ++i) {
    std::vector<float> x(16);
    for (float& f : x) f = float(s.next_gaussian());
    const int y = int(s.next_below(2));
    data.instances.push_back(
        make_flat("r" + std::to_string(i), x, y, i < 1000 ? "train" : "test"));
  }
  const Featurizer feat = Featurizer::raw(Shape::flat(16));
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 20;
  cfg.seed = 3;
  const RefModel m = train(data, feat, cfg);
  const double held_out = accuracy(m, data, feat, "test");
  CHECK(held_out > 0.45);
  CHECK(held_out < 0.55);
}

TEST_CASE("training is bit-reproducible from its config") {
  const Dataset data = separable_dataset(120, 5);
  const Featurizer feat = Featurizer::raw(Shape::flat(2));
  TrainConfig cfg;
  cfg.learning_rate = 0.4;
  cfg.epochs = 15;
  cfg.hidden = 6;
  cfg.seed = 9;

  const RefModel a = train(data, feat, cfg);
  const RefModel b = train(data, feat, cfg);
  CHECK(a.hidden_w == b.hidden_w);
  CHECK(a.hidden_b == b.hidden_b);
  CHECK(a.out_w == b.out_w);
  CHECK(a.out_b == b.out_b);

  cfg.seed = 10;
  const RefModel c = train(data, feat, cfg);
  CHECK(a.hidden_w != c.hidden_w);
}

TEST_CASE("validation snapshots keep the best epoch") {
  // All-zero inputs make the model act through its bias alone: training on
  // constant label 1 grows the class-1 bias every epoch, so all-0 validation
  // labels score exactly 0.0 after every epoch. The strict improvement rule
  // then pins the snapshot to epoch one, which a one-epoch run reproduces
  // bit for bit, while the final model keeps drifting away from it.
  Dataset data;
  data.k = 2;
  for (int i = 0; i < 40; ++i) {
    data.instances.push_back(make_flat("t" + std::to_string(i), {0.0f, 0.0f}, 1, "train"));
  }
  for (int i = 0; i < 10; ++i) {
    data.instances.push_back(make_flat("v" + std::to_string(i), {0.0f, 0.0f}, 0, "val"));
  }
  const Featurizer feat = Featurizer::raw(Shape::flat(2));
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 25;
  cfg.seed = 4;

  const RefModel long_run = train(data, feat, cfg);
  TrainConfig one = cfg;
  one.epochs = 1;
  const RefModel first = train(data, feat, one);
  CHECK(long_run.out_w == first.out_w);
  CHECK(long_run.out_b == first.out_b);

  // Without a validation split the drifted final model comes back instead.
  Dataset no_val = data;
  no_val.instances.resize(40);
  const RefModel final_model = train(no_val, feat, cfg);
  CHECK(final_model.out_b != first.out_b);

  // Early stop after two stale epochs reaches the same snapshot.
  TrainConfig eager = cfg;
  eager.patience = 2;
  const RefModel stopped = train(data, feat, eager);
  CHECK(stopped.out_b == first.out_b);
}

TEST_CASE("training diverges loudly under an absurd learning rate") {
  Dataset data = separable_dataset(64, 8, false);
  for (Instance& inst : data.instances) {
    for (float& f : inst.features) f *= 1000.0f;
  }
  // Contradictory twins guarantee a misclassified example once the giant
  // first step saturates the softmax, so the loss must go non-finite.
  data.instances.push_back(make_flat("twin0", {500.0f, 500.0f}, 0, "train"));
  data.instances.push_back(make_flat("twin1", {500.0f, 500.0f}, 1, "train"));
  const Featurizer feat = Featurizer::raw(Shape::flat(2));
  TrainConfig cfg;
  cfg.learning_rate = 1e18;
  cfg.epochs = 50;
  cfg.seed = 6;
  CHECK_THROWS_AS(train(data, feat, cfg), NumericError);
  cfg.hidden = 4;
  CHECK_THROWS_AS(train(data, feat, cfg), NumericError);
}

TEST_CASE("train and accuracy validate their inputs") {
  const Featurizer feat = Featurizer::raw(Shape::flat(2));
  TrainConfig cfg;

  Dataset no_train;
  no_train.k = 2;
  no_train.instances.push_back(make_flat("a", {1.0f, 2.0f}, 0, "test"));
  CHECK_THROWS_AS(train(no_train, feat, cfg), ValidationError);

  Dataset bad_label;
  bad_label.k = 2;
  bad_label.instances.push_back(make_flat("b", {1.0f, 2.0f}, 5, "train"));
  CHECK_THROWS_AS(train(bad_label, feat, cfg), ValidationError);

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.l2 = -0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  const Dataset data = separable_dataset(50, 2);
  TrainConfig quick;
  quick.epochs = 1;
  const RefModel m = train(data, feat, quick);
  CHECK_THROWS_AS(accuracy(m, data, feat, "nope"), ValidationError);
  CHECK_THROWS_AS(accuracy(m, Dataset{}, feat), ValidationError);
}

TEST_CASE("mean baseline averages raw features and stays empty for counts") {
  Dataset data;
  data.k = 2;
  data.instances.push_back(make_flat("a", {0.0f, 2.0f}));
  data.instances.push_back(make_flat("b", {4.0f, 6.0f}));
  // Means of the centered features: raw featurization shifts every value by -0.5.
  const std::vector<double> mean = mean_baseline(data, Featurizer::raw(Shape::flat(2)));
  CHECK(mean == std::vector<double>{1.5, 3.5});

  CHECK(mean_baseline(data, Featurizer::positional_bow(5)).empty());
  CHECK_THROWS_AS(mean_baseline(Dataset{}, Featurizer::raw(Shape::flat(2))),
                  ValidationError);
}

TEST_CASE("models survive a save/load round trip exactly") {
  TempDir dir;
  Stream s(55, "roundtrip");
  const RefModel m = random_mlp(s, 7, 4, 3);
  const std::string path = (dir.path / "model.bin").string();
  save_model(m, path);

  const RefModel back = load_model(path);
  CHECK(back.kind == m.kind);
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.num_classes == m.num_classes);
  CHECK(back.hidden == m.hidden);
  CHECK(back.hidden_w == m.hidden_w);
  CHECK(back.hidden_b == m.hidden_b);
  CHECK(back.out_w == m.out_w);
  CHECK(back.out_b == m.out_b);

  const nlohmann::json side = nlohmann::json::parse(io::read_file(path + ".json"));
  CHECK(side.at("kind") == "mlp");
  CHECK(side.at("input_dim") == 7);
  CHECK(side.at("num_classes") == 3);
  CHECK(side.at("hidden") == 4);

  const RefModel lin = random_linear(s, 3, 2);
  const std::string lin_path = (dir.path / "linear.bin").string();
  save_model(lin, lin_path);
  const RefModel lin_back = load_model(lin_path);
  CHECK(lin_back.kind == RefModel::Kind::linear);
  CHECK(lin_back.out_w == lin.out_w);
}

TEST_CASE("corrupt model files are rejected") {
  TempDir dir;
  Stream s(56, "corrupt");
  const RefModel m = random_mlp(s, 4, 3, 2);
  const std::string path = (dir.path / "model.bin").string();
  save_model(m, path);

  const std::string good = io::read_file(path);

  const std::string truncated_path = (dir.path / "trunc.bin").string();
  io::write_file(truncated_path, good.substr(0, good.size() - 5));
  CHECK_THROWS_AS(load_model(truncated_path), IoError);

  const std::string magic_path = (dir.path / "magic.bin").string();
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  io::write_file(magic_path, bad_magic);
  CHECK_THROWS_AS(load_model(magic_path), IoError);

  const std::string trailing_path = (dir.path / "trail.bin").string();
  io::write_file(trailing_path, good + "junk");
  CHECK_THROWS_AS(load_model(trailing_path), IoError);

  CHECK_THROWS_AS(load_model((dir.path / "missing.bin").string()), IoError);
}
