#include "atgt/textmanip.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "atgt/errors.hpp"
#include "atgt/rng.hpp"

namespace atgt::textmanip {

uint32_t Vocab::add(const std::string& word) {
  if (word.empty()) throw ValidationError("empty vocabulary token");
  const auto [it, inserted] = ids_.emplace(word, static_cast<uint32_t>(words_.size()));
  if (inserted) words_.push_back(word);
  return it->second;
}

uint32_t Vocab::id_of(const std::string& word) const {
  const auto it = ids_.find(word);
  if (it == ids_.end()) {
    throw ValidationError("word '" + word + "' is not in the vocabulary");
  }
  return it->second;
}

bool Vocab::contains(const std::string& word) const { return ids_.count(word) != 0; }

const std::string& Vocab::word(uint32_t id) const {
  if (id >= words_.size()) throw ValidationError("token id out of range");
  return words_[id];
}

void Corpus::ensure_articles() {
  vocab.add("a");
  vocab.add("an");
  vocab.add("the");
}

namespace {

struct ArticleIds {
  uint32_t a, an, the;

  bool is_article(uint32_t id) const { return id == a || id == an || id == the; }
  uint32_t by_index(uint64_t i) const { return i == 0 ? a : i == 1 ? an : the; }
};

ArticleIds article_ids(const Vocab& v) {
  if (!v.contains("a") || !v.contains("an") || !v.contains("the")) {
    throw ValidationError("corpus vocabulary must contain the articles a, an, the");
  }
  return {v.id_of("a"), v.id_of("an"), v.id_of("the")};
}

int draw_label(uint64_t seed, uint64_t index) {
  return Stream(seed, "textlabel", index).next_double() < 0.5 ? 0 : 1;
}

}  // namespace

TextBuildResult build_article_dataset(const Corpus& corpus, uint64_t seed) {
  if (corpus.reviews.empty()) throw ValidationError("cannot build from an empty corpus");
  const ArticleIds art = article_ids(corpus.vocab);

  TextBuildResult out;
  out.manip_id = "articles";
  out.skip_reason = "no articles";
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    const TokenSeq& src = corpus.reviews[i];
    std::vector<uint32_t> positions;
    for (uint32_t p = 0; p < src.size(); ++p) {
      if (art.is_article(src[p])) positions.push_back(p);
    }
    if (positions.empty()) {
      ++out.skipped;  // an article-free review carries no label signal
      continue;
    }
    TextInstance inst;
    inst.tokens = src;
    inst.label = draw_label(seed, i);
    const uint32_t replacement = inst.label == 1 ? art.the : art.a;
    for (uint32_t p : positions) inst.tokens[p] = replacement;
    inst.corr = EffectiveRegion(std::move(positions));
    inst.source_index = static_cast<uint32_t>(i);
    out.instances.push_back(std::move(inst));
  }
  if (out.instances.empty()) {
    throw ValidationError("every review was skipped: no articles anywhere");
  }
  return out;
}

TextBuildResult build_mixed_dataset(const Corpus& corpus, MixMode mode, uint64_t seed) {
  if (corpus.reviews.empty()) throw ValidationError("cannot build from an empty corpus");
  const ArticleIds art = article_ids(corpus.vocab);

  TextBuildResult out;
  out.manip_id = mode == MixMode::cn ? "mixed-cn" : "mixed-nc";
  out.skip_reason = "missing articles in a half";
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    const TokenSeq& src = corpus.reviews[i];
    const uint32_t mid = static_cast<uint32_t>(src.size() / 2);
    std::vector<uint32_t> first, second;
    for (uint32_t p = 0; p < src.size(); ++p) {
      if (!art.is_article(src[p])) continue;
      (p < mid ? first : second).push_back(p);
    }
    if (first.empty() || second.empty()) {
      ++out.skipped;
      continue;
    }
    TextInstance inst;
    inst.tokens = src;
    inst.label = draw_label(seed, i);
    // The substituted word here is drawn from its own stream, independent of
    // the label stream, so it carries no label information by construction.
    const uint32_t noncorr_word =
        art.by_index(Stream(seed, "textchoice", i).next_below(3));
    const uint32_t corr_word = inst.label == 1 ? art.the : art.a;
    std::vector<uint32_t>& corr_pos = mode == MixMode::cn ? first : second;
    std::vector<uint32_t>& noncorr_pos = mode == MixMode::cn ? second : first;
    for (uint32_t p : corr_pos) inst.tokens[p] = corr_word;
    for (uint32_t p : noncorr_pos) inst.tokens[p] = noncorr_word;
    inst.corr = EffectiveRegion(std::move(corr_pos));
    inst.noncorr = EffectiveRegion(std::move(noncorr_pos));
    inst.source_index = static_cast<uint32_t>(i);
    out.instances.push_back(std::move(inst));
  }
  if (out.instances.empty()) {
    throw ValidationError("every review was skipped: an article-bearing half is missing");
  }
  return out;
}

Dataset to_dataset(const TextBuildResult& built, uint64_t seed) {
  if (built.instances.empty()) throw ValidationError("no text instances to package");
  Dataset d;
  d.k = 2;
  d.p_star = 0.5;  // labels are fresh fair coins: content alone predicts nothing
  d.seed = seed;
  d.skipped = built.skipped;
  d.skip_reason = built.skipped > 0 ? built.skip_reason : "";
  for (const TextInstance& t : built.instances) {
    Instance inst;
    inst.id = "rev" + std::to_string(t.source_index);
    inst.shape = Shape::text(static_cast<uint32_t>(t.tokens.size()));
    inst.features.reserve(t.tokens.size());
    for (uint32_t id : t.tokens) {
      if (id >= (1u << 24)) throw ValidationError("token id exceeds exact float range");
      inst.features.push_back(static_cast<float>(id));
    }
    inst.y_orig = t.label;
    inst.y_hat = t.label;
    inst.manip_id = built.manip_id;
    std::vector<uint32_t> touched = t.corr.indices();
    touched.insert(touched.end(), t.noncorr.indices().begin(), t.noncorr.indices().end());
    inst.er = EffectiveRegion::from_unsorted(std::move(touched));
    inst.corr = t.corr;
    inst.noncorr = t.noncorr;
    d.instances.push_back(std::move(inst));
  }
  return d;
}

namespace {

// Content vocabulary for the synthetic review generator (no articles here;
// those are appended by ensure_articles and drawn separately).
constexpr const char* kSynthWords[] = {
    "pour", "pours", "poured", "golden", "amber", "copper", "ruby", "mahogany",
    "hazy", "cloudy", "clear", "bright", "murky", "opaque", "head", "foam",
    "lacing", "retention", "glass", "pint", "snifter", "tulip", "bottle",
    "growler", "draft", "keg", "aroma", "smell", "nose", "scent", "bouquet",
    "hop", "hops", "hoppy", "malt", "malts", "malty", "grain", "grainy",
    "caramel", "chocolate", "coffee", "espresso", "roasted", "toasted",
    "smoked", "citrus", "orange", "lemon", "grapefruit", "pine", "resin",
    "floral", "fruity", "berry", "cherry", "apple", "banana", "pear", "peach",
    "apricot", "mango", "tropical", "melon", "clove", "spice", "spicy",
    "pepper", "vanilla", "oak", "barrel", "bourbon", "aged", "smooth", "crisp",
    "clean", "refreshing", "light", "heavy", "thick", "thin", "watery",
    "creamy", "silky", "velvety", "dry", "sweet", "sweetness", "bitter",
    "bitterness", "sour", "tart", "funky", "earthy", "grassy", "herbal",
    "bready", "yeasty", "doughy", "nutty", "honey", "molasses", "toffee",
    "butterscotch", "raisin", "plum", "fig", "date", "prune", "licorice",
    "anise", "carbonation", "carbonated", "bubbly", "fizzy", "flat", "lively",
    "mouthfeel", "body", "finish", "aftertaste", "lingering", "balanced",
    "balance", "complex", "simple", "bold", "subtle", "mild", "strong",
    "boozy", "warming", "alcohol", "sessionable", "drinkable", "taste",
    "flavor", "flavors", "notes", "hints", "touch", "wave", "burst", "punch",
    "very", "quite", "really", "slightly", "somewhat", "overall", "first",
    "second", "initial", "final", "front", "back", "middle", "nice", "good",
    "great", "excellent", "amazing", "wonderful", "fantastic", "solid",
    "decent", "average", "mediocre", "poor", "bland", "boring", "interesting",
    "unique", "classic", "traditional", "american", "belgian", "german",
    "english", "irish", "czech", "imperial", "double", "triple", "quad",
    "session", "stout", "porter", "lager", "ale", "pilsner", "wheat",
    "saison", "lambic", "gose", "dunkel", "bock", "tripel", "dubbel",
    "barleywine", "brew", "brewed", "brewery", "brewing", "batch", "style",
    "color", "appearance", "look", "looks",
};

void ensure_half_has_article(Stream& s, TokenSeq* tokens, uint32_t lo, uint32_t hi,
                             const ArticleIds& art) {
  for (uint32_t p = lo; p < hi; ++p) {
    if (art.is_article((*tokens)[p])) return;
  }
  const uint32_t pos = lo + static_cast<uint32_t>(s.next_below(hi - lo));
  (*tokens)[pos] = art.by_index(s.next_below(3));
}

}  // namespace

Corpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.reviews == 0) throw ValidationError("need at least one review");
  if (cfg.min_len < 2 || cfg.max_len < cfg.min_len) {
    throw ValidationError("review length range must satisfy 2 <= min <= max");
  }
  if (!(cfg.article_density >= 0.0 && cfg.article_density <= 1.0)) {
    throw ValidationError("article density must lie in [0, 1]");
  }

  Corpus corpus;
  for (const char* w : kSynthWords) corpus.vocab.add(w);
  const uint32_t content_count = corpus.vocab.size();
  corpus.ensure_articles();
  const ArticleIds art = article_ids(corpus.vocab);

  corpus.reviews.reserve(cfg.reviews);
  for (uint64_t i = 0; i < cfg.reviews; ++i) {
    Stream s(cfg.seed, "synth", i);
    const uint32_t len =
        cfg.min_len + static_cast<uint32_t>(s.next_below(cfg.max_len - cfg.min_len + 1));
    TokenSeq tokens(len);
    for (uint32_t p = 0; p < len; ++p) {
      tokens[p] = s.next_double() < cfg.article_density
                      ? art.by_index(s.next_below(3))
                      : static_cast<uint32_t>(s.next_below(content_count));
    }
    const uint32_t mid = len / 2;
    ensure_half_has_article(s, &tokens, 0, mid, art);
    ensure_half_has_article(s, &tokens, mid, len, art);
    corpus.reviews.push_back(std::move(tokens));
  }
  return corpus;
}

namespace {

std::string lowercased(std::string word) {
  for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return word;
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing", path);
  out << content;
  if (!out) throw IoError("write failed", path);
}

}  // namespace

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus", path);
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream tokens(line);
    TokenSeq review;
    std::string word;
    while (tokens >> word) review.push_back(corpus.vocab.add(lowercased(word)));
    corpus.reviews.push_back(std::move(review));
  }
  if (corpus.reviews.empty()) throw IoError("corpus file has no reviews", path);
  corpus.ensure_articles();
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::string content;
  for (const TokenSeq& review : corpus.reviews) {
    for (std::size_t p = 0; p < review.size(); ++p) {
      if (p > 0) content += ' ';
      content += corpus.vocab.word(review[p]);
    }
    content += '\n';
  }
  write_text_file(path, content);
}

Vocab read_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocabulary", path);
  std::vector<std::string> by_id;
  std::string line;
  uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    uint64_t id = 0;
    if (!(fields >> word >> id) || !(fields >> std::ws).eof()) {
      throw ValidationError("vocabulary line " + std::to_string(line_no) +
                            " is not 'word id'");
    }
    if (id >= (1u << 24)) {
      throw ValidationError("vocabulary id " + std::to_string(id) + " is implausibly large");
    }
    if (id >= by_id.size()) by_id.resize(id + 1);
    if (!by_id[id].empty()) {
      throw ValidationError("vocabulary id " + std::to_string(id) + " appears twice");
    }
    by_id[id] = word;
  }
  Vocab vocab;
  for (std::size_t id = 0; id < by_id.size(); ++id) {
    if (by_id[id].empty()) {
      throw ValidationError("vocabulary ids are not dense: " + std::to_string(id) +
                            " is missing");
    }
    if (vocab.contains(by_id[id])) {
      throw ValidationError("vocabulary word '" + by_id[id] + "' appears twice");
    }
    vocab.add(by_id[id]);
  }
  return vocab;
}

void write_vocab(const Vocab& vocab, const std::string& path) {
  std::string content;
  for (uint32_t id = 0; id < vocab.size(); ++id) {
    content += vocab.word(id);
    content += ' ';
    content += std::to_string(id);
    content += '\n';
  }
  write_text_file(path, content);
}

}  // namespace atgt::textmanip
