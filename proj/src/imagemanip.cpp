#include "atgt/imagemanip.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "atgt/errors.hpp"
#include "atgt/rng.hpp"
#include "atgt/util.hpp"

namespace atgt::imagemanip {

Image Image::filled(uint32_t h, uint32_t w, float value, uint32_t c) {
  Image img;
  img.h = h;
  img.w = w;
  img.c = c;
  img.data.assign(static_cast<std::size_t>(h) * w * c, value);
  return img;
}

void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  *v = mx;
  *s = mx <= 0.0 ? 0.0 : d / mx;
  if (d <= 0.0) {
    *h = 0.0;
    return;
  }
  double hue;
  if (mx == r) {
    hue = (g - b) / d;
  } else if (mx == g) {
    hue = (b - r) / d + 2.0;
  } else {
    hue = (r - g) / d + 4.0;
  }
  hue /= 6.0;
  if (hue < 0.0) hue += 1.0;
  if (hue >= 1.0) hue -= 1.0;
  *h = hue;
}

void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b) {
  if (s <= 0.0) {
    *r = *g = *b = v;
    return;
  }
  double k = h - std::floor(h);
  k *= 6.0;
  const int sector = std::min(5, static_cast<int>(k));
  const double f = k - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: *r = v; *g = t; *b = p; break;
    case 1: *r = q; *g = v; *b = p; break;
    case 2: *r = p; *g = v; *b = t; break;
    case 3: *r = p; *g = q; *b = v; break;
    case 4: *r = t; *g = p; *b = v; break;
    default: *r = v; *g = p; *b = q; break;
  }
}

ImageManipSpec ImageManipSpec::blur(double radius, double sigma) {
  ImageManipSpec s;
  s.kind = Kind::blur;
  s.radius = radius;
  s.sigma = sigma;
  return s;
}

ImageManipSpec ImageManipSpec::brightness(double radius, double magnitude) {
  ImageManipSpec s;
  s.kind = Kind::brightness;
  s.radius = radius;
  s.magnitude = magnitude;
  return s;
}

ImageManipSpec ImageManipSpec::hue(uint32_t upper, uint32_t lower, double magnitude) {
  ImageManipSpec s;
  s.kind = Kind::hue;
  s.upper = upper;
  s.lower = lower;
  s.magnitude = magnitude;
  return s;
}

ImageManipSpec ImageManipSpec::noise(uint32_t upper, uint32_t lower, double replace_prob) {
  ImageManipSpec s;
  s.kind = Kind::noise;
  s.upper = upper;
  s.lower = lower;
  s.replace_prob = replace_prob;
  return s;
}

ImageManipSpec ImageManipSpec::watermark(uint32_t ul_row, uint32_t ul_col, uint32_t lr_row,
                                         uint32_t lr_col, uint32_t font_size) {
  ImageManipSpec s;
  s.kind = Kind::watermark;
  s.ul_row = ul_row;
  s.ul_col = ul_col;
  s.lr_row = lr_row;
  s.lr_col = lr_col;
  s.font_size = font_size;
  return s;
}

std::string ImageManipSpec::id() const {
  switch (kind) {
    case Kind::blur: return "blur";
    case Kind::brightness: return "brightness";
    case Kind::hue: return "hue";
    case Kind::noise: return "noise";
    case Kind::watermark: return "watermark";
  }
  return "unknown";
}

ImageManipSpec::Kind ImageManipSpec::kind_from_id(const std::string& id) {
  if (id == "blur") return Kind::blur;
  if (id == "brightness") return Kind::brightness;
  if (id == "hue") return Kind::hue;
  if (id == "noise") return Kind::noise;
  if (id == "watermark") return Kind::watermark;
  throw ValidationError("unknown manipulation kind '" + id + "'");
}

namespace {

// 5x7 glyphs, one byte per row, bit 4 the leftmost column.
struct Glyph {
  char ch;
  uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'I', {0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'M', {0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001}},
    {'G', {0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111}},
    {'0', {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110}},
    {'1', {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110}},
    {'2', {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111}},
    {'3', {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110}},
    {'4', {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010}},
    {'5', {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110}},
    {'6', {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110}},
    {'7', {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000}},
    {'8', {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110}},
    {'9', {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100}},
};

const Glyph& glyph_for(char ch) {
  for (const Glyph& g : kFont) {
    if (g.ch == ch) return g;
  }
  throw ValidationError(std::string("no glyph for '") + ch + "'");
}

constexpr uint32_t kGlyphW = 5, kGlyphH = 7, kGlyphAdvance = 6;  // 1 column gap
constexpr uint32_t kTextChars = 7;                               // IMG + 4 digits
// Unscaled text width: 7 cells of 6 columns, minus the trailing gap.
constexpr uint32_t kTextUnitW = kTextChars * kGlyphAdvance - 1;

double center_distance(uint32_t row, uint32_t col, uint32_t h, uint32_t w) {
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double dy = static_cast<double>(row) - cy;
  const double dx = static_cast<double>(col) - cx;
  return std::sqrt(dy * dy + dx * dx);
}

}  // namespace

uint32_t watermark_box_height(uint32_t font_size) { return font_size; }

uint32_t watermark_box_width(uint32_t font_size) {
  // ceil(kTextUnitW * font / kGlyphH): nearest-neighbor horizontal scale.
  return (kTextUnitW * font_size + kGlyphH - 1) / kGlyphH;
}

void ImageManipSpec::validate(uint32_t h, uint32_t w) const {
  if (h < 1 || w < 1) throw ValidationError("manipulation target image is empty");
  switch (kind) {
    case Kind::blur:
      if (!(radius > 0.0)) throw ValidationError("blur radius must be positive");
      if (!(sigma > 0.0)) throw ValidationError("blur sigma must be positive");
      return;
    case Kind::brightness:
      if (!(radius > 0.0)) throw ValidationError("brightness radius must be positive");
      if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
        throw ValidationError("brightness magnitude must lie in [0, 1]");
      }
      return;
    case Kind::hue:
      if (upper >= lower) throw ValidationError("stripe needs upper < lower");
      if (lower > h) throw ValidationError("stripe exceeds image height");
      if (!(magnitude >= 0.0 && magnitude <= 1.0)) {
        throw ValidationError("hue magnitude must lie in [0, 1]");
      }
      return;
    case Kind::noise:
      if (upper >= lower) throw ValidationError("stripe needs upper < lower");
      if (lower > h) throw ValidationError("stripe exceeds image height");
      if (!(replace_prob >= 0.0 && replace_prob <= 1.0)) {
        throw ValidationError("noise probability must lie in [0, 1]");
      }
      return;
    case Kind::watermark: {
      if (ul_row >= lr_row || ul_col >= lr_col) {
        throw ValidationError("watermark rectangle needs ul < lr");
      }
      if (lr_row > h || lr_col > w) {
        throw ValidationError("watermark rectangle exceeds image bounds");
      }
      if (font_size < 1) throw ValidationError("watermark font size must be >= 1");
      return;
    }
  }
  throw ValidationError("unknown manipulation kind");
}

ImageManipSpec ImageManipSpec::with_visibility(double value) const {
  ImageManipSpec out = *this;
  switch (kind) {
    case Kind::blur:
      out.sigma = value;
      break;
    case Kind::brightness:
    case Kind::hue:
      out.magnitude = value;
      break;
    case Kind::noise:
      out.replace_prob = value;
      break;
    case Kind::watermark:
      if (value < 1.0 || value != std::floor(value)) {
        throw ValidationError("watermark visibility must be an integral font size");
      }
      out.font_size = static_cast<uint32_t>(value);
      break;
  }
  return out;
}

EffectiveRegion effective_region(const ImageManipSpec& spec, uint32_t h, uint32_t w) {
  spec.validate(h, w);
  std::vector<uint32_t> idx;
  switch (spec.kind) {
    case ImageManipSpec::Kind::blur:
      for (uint32_t r = 0; r < h; ++r) {
        for (uint32_t c = 0; c < w; ++c) {
          if (center_distance(r, c, h, w) > spec.radius) idx.push_back(r * w + c);
        }
      }
      break;
    case ImageManipSpec::Kind::brightness:
      for (uint32_t r = 0; r < h; ++r) {
        for (uint32_t c = 0; c < w; ++c) {
          if (center_distance(r, c, h, w) < spec.radius) idx.push_back(r * w + c);
        }
      }
      break;
    case ImageManipSpec::Kind::hue:
    case ImageManipSpec::Kind::noise:
      for (uint32_t r = spec.upper; r < spec.lower; ++r) {
        for (uint32_t c = 0; c < w; ++c) idx.push_back(r * w + c);
      }
      break;
    case ImageManipSpec::Kind::watermark:
      for (uint32_t r = spec.ul_row; r < spec.lr_row; ++r) {
        for (uint32_t c = spec.ul_col; c < spec.lr_col; ++c) idx.push_back(r * w + c);
      }
      break;
  }
  return EffectiveRegion(std::move(idx));
}

namespace {

void check_image(const Image& img) {
  if (img.c != 3) throw ValidationError("manipulations require 3-channel images");
  if (img.data.size() != static_cast<std::size_t>(img.h) * img.w * img.c) {
    throw ValidationError("image buffer size does not match its dimensions");
  }
}

float clamp01(double v) {
  return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

void apply_blur(const Image& in, Image* out, const ImageManipSpec& spec) {
  const uint32_t h = in.h, w = in.w;
  const int reach = std::max(1, static_cast<int>(std::ceil(3.0 * spec.sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * reach + 1));
  double norm = 0.0;
  for (int i = -reach; i <= reach; ++i) {
    const double v = std::exp(-0.5 * (i / spec.sigma) * (i / spec.sigma));
    kernel[static_cast<std::size_t>(i + reach)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  // Separable passes with clamp-to-edge, in double precision.
  std::vector<double> tmp(in.data.size());
  for (uint32_t r = 0; r < h; ++r) {
    for (uint32_t c = 0; c < w; ++c) {
      for (uint32_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -reach; i <= reach; ++i) {
          const int cc = std::clamp<int>(static_cast<int>(c) + i, 0, static_cast<int>(w) - 1);
          acc += kernel[static_cast<std::size_t>(i + reach)] *
                 in.at(r, static_cast<uint32_t>(cc), ch);
        }
        tmp[(static_cast<std::size_t>(r) * w + c) * 3 + ch] = acc;
      }
    }
  }
  for (uint32_t r = 0; r < h; ++r) {
    for (uint32_t c = 0; c < w; ++c) {
      if (!(center_distance(r, c, h, w) > spec.radius)) continue;
      for (uint32_t ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -reach; i <= reach; ++i) {
          const int rr = std::clamp<int>(static_cast<int>(r) + i, 0, static_cast<int>(h) - 1);
          acc += kernel[static_cast<std::size_t>(i + reach)] *
                 tmp[(static_cast<std::size_t>(rr) * w + c) * 3 + ch];
        }
        out->at(r, c, ch) = clamp01(acc);
      }
    }
  }
}

void apply_brightness(const Image& in, Image* out, const ImageManipSpec& spec) {
  for (uint32_t r = 0; r < in.h; ++r) {
    for (uint32_t c = 0; c < in.w; ++c) {
      const double d = center_distance(r, c, in.h, in.w);
      if (!(d < spec.radius)) continue;
      const double shift = spec.magnitude * std::max(0.0, 1.0 - d / spec.radius);
      double hh, ss, vv;
      rgb_to_hsv(in.at(r, c, 0), in.at(r, c, 1), in.at(r, c, 2), &hh, &ss, &vv);
      vv = std::max(0.0, vv - shift);
      double rr, gg, bb;
      hsv_to_rgb(hh, ss, vv, &rr, &gg, &bb);
      out->at(r, c, 0) = clamp01(rr);
      out->at(r, c, 1) = clamp01(gg);
      out->at(r, c, 2) = clamp01(bb);
    }
  }
}

void apply_hue(const Image& in, Image* out, const ImageManipSpec& spec) {
  const double span = static_cast<double>(spec.lower) - static_cast<double>(spec.upper);
  for (uint32_t r = spec.upper; r < spec.lower; ++r) {
    const double phase = (static_cast<double>(r) - spec.upper) / span;
    const double delta = spec.magnitude * std::sin(3.14159265358979323846 * phase);
    for (uint32_t c = 0; c < in.w; ++c) {
      double hh, ss, vv;
      rgb_to_hsv(in.at(r, c, 0), in.at(r, c, 1), in.at(r, c, 2), &hh, &ss, &vv);
      hh += delta;
      hh -= std::floor(hh);
      double rr, gg, bb;
      hsv_to_rgb(hh, ss, vv, &rr, &gg, &bb);
      out->at(r, c, 0) = clamp01(rr);
      out->at(r, c, 1) = clamp01(gg);
      out->at(r, c, 2) = clamp01(bb);
    }
  }
}

void apply_noise(const Image& in, Image* out, const ImageManipSpec& spec, uint64_t seed) {
  for (uint32_t r = spec.upper; r < spec.lower; ++r) {
    for (uint32_t c = 0; c < in.w; ++c) {
      // One stream per pixel: the pattern is independent of scan order.
      Stream s(seed, "noise", static_cast<uint64_t>(r) * in.w + c);
      if (s.next_double() >= spec.replace_prob) continue;
      out->at(r, c, 0) = static_cast<float>(s.next_double());
      out->at(r, c, 1) = static_cast<float>(s.next_double());
      out->at(r, c, 2) = static_cast<float>(s.next_double());
    }
  }
}

void apply_watermark(const Image& in, Image* out, const ImageManipSpec& spec, uint64_t seed) {
  Stream s(seed, "watermark");
  char text[kTextChars] = {'I', 'M', 'G', '0', '0', '0', '0'};
  for (int i = 0; i < 4; ++i) {
    text[3 + i] = static_cast<char>('0' + s.next_below(10));
  }
  const uint32_t rect_h = spec.lr_row - spec.ul_row;
  const uint32_t rect_w = spec.lr_col - spec.ul_col;
  const uint32_t box_h = watermark_box_height(spec.font_size);
  const uint32_t box_w = watermark_box_width(spec.font_size);
  // Placement is uniform over the offsets that keep the text box inside the
  // rectangle; an oversized box anchors at the corner and is cropped below.
  const uint64_t slack_r = rect_h > box_h ? rect_h - box_h + 1 : 1;
  const uint64_t slack_c = rect_w > box_w ? rect_w - box_w + 1 : 1;
  const uint32_t row0 = spec.ul_row + static_cast<uint32_t>(s.next_below(slack_r));
  const uint32_t col0 = spec.ul_col + static_cast<uint32_t>(s.next_below(slack_c));

  for (uint32_t y = 0; y < box_h && row0 + y < spec.lr_row; ++y) {
    // Nearest-neighbor scale from the 5x7 master bitmap.
    const uint32_t gy = y * kGlyphH / spec.font_size;
    for (uint32_t x = 0; x < box_w && col0 + x < spec.lr_col; ++x) {
      const uint32_t gx = x * kGlyphH / spec.font_size;  // same scale both axes
      if (gx >= kTextUnitW) continue;
      const uint32_t cell = gx / kGlyphAdvance;
      const uint32_t col_in_cell = gx % kGlyphAdvance;
      if (col_in_cell >= kGlyphW) continue;  // inter-glyph gap
      const Glyph& g = glyph_for(text[cell]);
      if (((g.rows[gy] >> (kGlyphW - 1 - col_in_cell)) & 1u) == 0) continue;
      const float value = cell < 3 ? 1.0f : 0.0f;  // IMG white, digits black
      for (uint32_t ch = 0; ch < 3; ++ch) out->at(row0 + y, col0 + x, ch) = value;
    }
  }
  (void)in;
}

}  // namespace

ManipResult apply_manipulation(const Image& img, const ImageManipSpec& spec, uint64_t seed) {
  check_image(img);
  spec.validate(img.h, img.w);
  ManipResult result;
  result.er = effective_region(spec, img.h, img.w);
  result.image = img;  // untouched pixels stay bit-identical by construction
  switch (spec.kind) {
    case ImageManipSpec::Kind::blur:
      apply_blur(img, &result.image, spec);
      break;
    case ImageManipSpec::Kind::brightness:
      apply_brightness(img, &result.image, spec);
      break;
    case ImageManipSpec::Kind::hue:
      apply_hue(img, &result.image, spec);
      break;
    case ImageManipSpec::Kind::noise:
      apply_noise(img, &result.image, spec, seed);
      break;
    case ImageManipSpec::Kind::watermark:
      apply_watermark(img, &result.image, spec, seed);
      break;
  }
  return result;
}

std::vector<double> visibility_ladder(ImageManipSpec::Kind kind) {
  switch (kind) {
    case ImageManipSpec::Kind::blur: return {2, 4, 6, 8, 10};
    case ImageManipSpec::Kind::brightness: return {0.1, 0.15, 0.2, 0.25, 0.3};
    case ImageManipSpec::Kind::hue: return {0.05, 0.1, 0.15, 0.2, 0.25};
    case ImageManipSpec::Kind::noise: return {0.02, 0.04, 0.06, 0.08, 0.1};
    case ImageManipSpec::Kind::watermark: return {7, 9, 11, 13, 15};
  }
  throw ValidationError("unknown manipulation kind");
}

Dataset modify_image_dataset(const Dataset& input, const reassign::ReassignConfig& reassign_cfg,
                             const ClassManipMap& class_to_manip, uint64_t seed,
                             unsigned threads) {
  if (input.instances.empty()) throw ValidationError("cannot modify an empty dataset");
  const uint32_t k = reassign_cfg.matrix.k();
  for (uint32_t cls = 0; cls < k; ++cls) {
    if (!class_to_manip.count(static_cast<int>(cls))) {
      throw ValidationError("class " + std::to_string(cls) +
                            " has no manipulation mapping (use blank explicitly)");
    }
  }

  const Shape shape = input.instances.front().shape;
  if (shape.kind != Shape::Kind::image) {
    throw ValidationError("modify_image_dataset requires image instances");
  }
  for (const auto& inst : input.instances) {
    if (inst.shape != shape) {
      throw ValidationError("modify_image_dataset requires a uniform image shape");
    }
  }
  std::vector<EffectiveRegion> regions;
  for (const auto& [cls, manip] : class_to_manip) {
    if (cls < 0 || static_cast<uint32_t>(cls) >= k) {
      throw ValidationError("manipulation mapped to out-of-range class");
    }
    if (manip.has_value()) regions.push_back(effective_region(*manip, shape.h, shape.w));
  }

  std::vector<int> labels(input.instances.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = input.instances[i].y_orig;
  const std::vector<int> new_labels = reassign::reassign_labels(labels, reassign_cfg);

  Dataset out;
  out.k = k;
  out.joint_er = joint_effective_region(regions);
  out.p_star = reassign::max_achievable_accuracy(reassign_cfg.matrix);
  out.seed = seed;
  out.instances.resize(input.instances.size());

  parallel_for(input.instances.size(), threads, [&](std::size_t i) {
    const Instance& src = input.instances[i];
    Instance& dst = out.instances[i];
    dst = src;
    dst.y_hat = new_labels[i];
    const auto& manip = class_to_manip.at(new_labels[i]);
    if (!manip.has_value()) {
      dst.manip_id = "";
      dst.er = EffectiveRegion();
      return;
    }
    Image img;
    img.h = shape.h;
    img.w = shape.w;
    img.c = shape.c;
    img.data = src.features;
    ManipResult res =
        apply_manipulation(img, *manip, rng::derive_key(seed, "manip", i));
    dst.features = std::move(res.image.data);
    dst.manip_id = manip->id();
    dst.er = std::move(res.er);
  });
  return out;
}

}  // namespace atgt::imagemanip
