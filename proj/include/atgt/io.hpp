#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atgt/core.hpp"

namespace atgt::io {

// Little-endian encoding blocks shared by every binary format in the tree.
void put_u32(std::string& out, uint32_t v);
void put_u64(std::string& out, uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

// Sequential decoder over a whole file image; short reads throw IoError
// naming the source path.
class Reader {
 public:
  Reader(std::string data, std::string path);

  uint32_t u32();
  uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& path() const { return path_; }

 private:
  void need(std::size_t n);

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

// Whole-file helpers; writing creates missing parent directories.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& data);

// Raw feature blob: 16-byte header (magic "ATGT", u32 version, u64 element
// count, all little-endian) followed by little-endian float32 values.
inline constexpr char kBlobMagic[4] = {'A', 'T', 'G', 'T'};
inline constexpr uint32_t kBlobVersion = 1;

void write_blob(const std::string& path, const std::vector<float>& values);
std::vector<float> read_blob(const std::string& path);

// Attribution exchange file: 16-byte header (magic "ATTR", u32 version, u64
// record count), then per record: u32 id length, id bytes, u32 D, D
// little-endian float32 scores.
inline constexpr char kAttrMagic[4] = {'A', 'T', 'T', 'R'};
inline constexpr uint32_t kAttrVersion = 1;

void write_attributions(const std::string& path, const std::vector<AttributionMap>& maps);
std::vector<AttributionMap> read_attributions(const std::string& path);

// Dataset manifest: JSON-lines. The first line is a header record carrying
// dataset-level facts (k, p_star, joint ER, seed, skip report); every
// following line describes one instance and points at its feature blob.
// Blob paths are stored relative to the manifest's directory.
void write_manifest(const std::string& manifest_path, const Dataset& dataset,
                    const std::string& blob_subdir = "blobs");
Dataset read_manifest(const std::string& manifest_path);

}  // namespace atgt::io
