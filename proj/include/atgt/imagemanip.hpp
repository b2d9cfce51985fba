#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atgt/core.hpp"
#include "atgt/reassign.hpp"

namespace atgt::imagemanip {

// Interleaved row-major RGB image with values in [0, 1].
struct Image {
  uint32_t h = 0, w = 0, c = 3;
  std::vector<float> data;

  static Image filled(uint32_t h, uint32_t w, float value, uint32_t c = 3);

  float& at(uint32_t row, uint32_t col, uint32_t ch) {
    return data[(static_cast<std::size_t>(row) * w + col) * c + ch];
  }
  float at(uint32_t row, uint32_t col, uint32_t ch) const {
    return data[(static_cast<std::size_t>(row) * w + col) * c + ch];
  }
  Shape shape() const { return Shape::image(h, w, c); }
};

// Exact conversions used by the brightness and hue manipulations. h is in
// [0, 1) (wrapping), s and v in [0, 1].
void rgb_to_hsv(double r, double g, double b, double* h, double* s, double* v);
void hsv_to_rgb(double h, double s, double v, double* r, double* g, double* b);

struct ImageManipSpec {
  enum class Kind { blur, brightness, hue, noise, watermark };

  Kind kind = Kind::blur;
  double radius = 0.0;        // blur: unaffected disc; brightness: dimmed disc
  double sigma = 0.0;         // blur
  double magnitude = 0.0;     // brightness, hue
  uint32_t upper = 0;         // hue, noise: stripe rows [upper, lower)
  uint32_t lower = 0;
  double replace_prob = 0.0;  // noise
  uint32_t ul_row = 0, ul_col = 0;  // watermark rectangle [ul, lr)
  uint32_t lr_row = 0, lr_col = 0;
  uint32_t font_size = 0;     // watermark text height in pixels

  static ImageManipSpec blur(double radius, double sigma);
  static ImageManipSpec brightness(double radius, double magnitude);
  static ImageManipSpec hue(uint32_t upper, uint32_t lower, double magnitude);
  static ImageManipSpec noise(uint32_t upper, uint32_t lower, double replace_prob);
  static ImageManipSpec watermark(uint32_t ul_row, uint32_t ul_col, uint32_t lr_row,
                                  uint32_t lr_col, uint32_t font_size);

  std::string id() const;  // kind name, the manifest manipulation identifier
  static Kind kind_from_id(const std::string& id);

  void validate(uint32_t h, uint32_t w) const;

  // Copy with the kind's visibility parameter (sigma, magnitude, probability
  // or font size) replaced. Region parameters are untouched, so the
  // effective region is independent of visibility.
  ImageManipSpec with_visibility(double value) const;
};

// Rendered "IMGxxxx" text box dimensions for a font size (text height).
// A box larger than the watermark rectangle anchors at the upper-left corner
// and is cropped to the rectangle, so the region contract still holds.
uint32_t watermark_box_height(uint32_t font_size);
uint32_t watermark_box_width(uint32_t font_size);

// The set of pixels the manipulation may modify over all random draws, as a
// pure function of the spec and image dimensions: blur covers everything
// strictly outside the radius, brightness everything strictly inside, the
// striped kinds their full stripe, watermark its full rectangle.
EffectiveRegion effective_region(const ImageManipSpec& spec, uint32_t h, uint32_t w);

struct ManipResult {
  Image image;
  EffectiveRegion er;
};

// Applies the manipulation. Pixels outside the returned region are copied
// bit-for-bit from the input. The seed scopes all random draws (noise
// pattern, watermark digits and placement), so equal (image, spec, seed)
// triples give equal outputs regardless of call order.
ManipResult apply_manipulation(const Image& img, const ImageManipSpec& spec, uint64_t seed);

// The five visibility values for a kind, least visible first.
std::vector<double> visibility_ladder(ImageManipSpec::Kind kind);

// blank (no manipulation) is an empty optional; every class must be mapped.
using ClassManipMap = std::map<int, std::optional<ImageManipSpec>>;

// Reassigns every label, applies the manipulation mapped to the new label,
// and records per-instance regions, the joint region over all mapped
// manipulations, and the accuracy cap. Instances keep their ids and splits.
// Per-instance derived streams make the result independent of thread count.
Dataset modify_image_dataset(const Dataset& input, const reassign::ReassignConfig& reassign_cfg,
                             const ClassManipMap& class_to_manip, uint64_t seed,
                             unsigned threads = 1);

}  // namespace atgt::imagemanip
