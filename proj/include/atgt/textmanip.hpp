#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::textmanip {

// Dense token-id vocabulary, ids assigned in first-seen order.
class Vocab {
 public:
  uint32_t add(const std::string& word);  // idempotent, returns the id
  uint32_t id_of(const std::string& word) const;  // throws when absent
  bool contains(const std::string& word) const;
  const std::string& word(uint32_t id) const;
  uint32_t size() const { return static_cast<uint32_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, uint32_t> ids_;
};

using TokenSeq = std::vector<uint32_t>;

struct Corpus {
  Vocab vocab;
  std::vector<TokenSeq> reviews;

  // The substitutions need ids for all three article words even when the
  // source text lacks one of them.
  void ensure_articles();
};

// One review after modification. Tokens outside corr and noncorr positions
// are unchanged from the source; every listed position holds an article.
struct TextInstance {
  TokenSeq tokens;
  int label = 0;  // 1 = positive
  EffectiveRegion corr;
  EffectiveRegion noncorr;
  uint32_t source_index = 0;
};

struct TextBuildResult {
  std::vector<TextInstance> instances;
  std::string manip_id;
  uint64_t skipped = 0;
  std::string skip_reason;
};

// Draws a fair-coin label per review, then rewrites every article token
// ("a", "an", "the"): positives get "the", negatives "a". corr lists the
// article positions; reviews without articles are skipped and counted.
TextBuildResult build_article_dataset(const Corpus& corpus, uint64_t seed);

// cn: the first half correlates; nc: the second half does.
enum class MixMode { cn, nc };

// Splits each review at floor(len/2). Articles in the correlating half are
// set by the label as above; articles in the other half are all set to ONE
// word drawn uniformly from {a, an, the} per review, independent of the
// label. Reviews lacking an article in either half are skipped and counted.
TextBuildResult build_mixed_dataset(const Corpus& corpus, MixMode mode, uint64_t seed);

// Packages built instances for the manifest: features hold token ids, the
// per-instance region is corr plus noncorr. Labels are fresh coins, so the
// content-only accuracy cap is 0.5; the dataset-level joint region is empty
// because article positions differ per review.
Dataset to_dataset(const TextBuildResult& built, uint64_t seed);

// Synthetic review corpus over a fixed ~200-word vocabulary. Tokens are
// drawn independently; each position becomes an article with probability
// article_density, and each half of every review is guaranteed at least one
// article so the split-half constructions keep (almost) every review.
struct SynthConfig {
  uint64_t reviews = 2000;
  uint32_t min_len = 8;
  uint32_t max_len = 30;
  double article_density = 0.08;
  uint64_t seed = 0;
};

Corpus synth_corpus(const SynthConfig& cfg);

// One whitespace-tokenized review per line. Reading lowercases ASCII and
// assigns ids in first-seen order.
Corpus read_corpus(const std::string& path);
void write_corpus(const Corpus& corpus, const std::string& path);

// Vocabulary file: one "word id" pair per line, written in id order. Ids
// must form the dense range 0..n-1.
Vocab read_vocab(const std::string& path);
void write_vocab(const Vocab& vocab, const std::string& path);

}  // namespace atgt::textmanip
