#include "atgt/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "atgt/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace atgt::io {

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v & 0xffffffffull));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

Reader::Reader(std::string data, std::string path)
    : data_(std::move(data)), path_(std::move(path)) {}

uint32_t Reader::u32() {
  need(4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(data_[pos_ + i]);
  pos_ += 4;
  return v;
}

uint64_t Reader::u64() {
  const uint64_t lo = u32();
  const uint64_t hi = u32();
  return lo | (hi << 32);
}

float Reader::f32() {
  const uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

double Reader::f64() {
  const uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string Reader::bytes(std::size_t n) {
  need(n);
  std::string s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

void Reader::need(std::size_t n) {
  if (pos_ + n > data_.size()) {
    throw IoError("truncated file", path_);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file", path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure", path);
  return data;
}

void write_file(const std::string& path, const std::string& data) {
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing", path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failure", path);
}

namespace {

ordered_json shape_to_json(const Shape& shape) {
  ordered_json j;
  switch (shape.kind) {
    case Shape::Kind::image:
      j["kind"] = "image";
      j["h"] = shape.h;
      j["w"] = shape.w;
      j["c"] = shape.c;
      break;
    case Shape::Kind::text:
      j["kind"] = "text";
      j["l"] = shape.length;
      break;
    case Shape::Kind::flat:
      j["kind"] = "flat";
      j["n"] = shape.length;
      break;
  }
  return j;
}

Shape shape_from_json(const ordered_json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "image") {
    return Shape::image(j.at("h").get<uint32_t>(), j.at("w").get<uint32_t>(),
                        j.at("c").get<uint32_t>());
  }
  if (kind == "text") return Shape::text(j.at("l").get<uint32_t>());
  if (kind == "flat") return Shape::flat(j.at("n").get<uint32_t>());
  throw ValidationError("unknown shape kind '" + kind + "'");
}

}  // namespace

void write_blob(const std::string& path, const std::vector<float>& values) {
  std::string out;
  out.reserve(16 + values.size() * 4);
  out.append(kBlobMagic, 4);
  put_u32(out, kBlobVersion);
  put_u64(out, values.size());
  for (float v : values) put_f32(out, v);
  write_file(path, out);
}

std::vector<float> read_blob(const std::string& path) {
  Reader r(read_file(path), path);
  if (r.bytes(4) != std::string(kBlobMagic, 4)) {
    throw IoError("bad feature blob magic", path);
  }
  const uint32_t version = r.u32();
  if (version != kBlobVersion) {
    throw IoError("unsupported feature blob version " + std::to_string(version), path);
  }
  const uint64_t count = r.u64();
  std::vector<float> values;
  values.reserve(count);
  for (uint64_t i = 0; i < count; ++i) values.push_back(r.f32());
  if (!r.at_end()) throw IoError("trailing bytes after feature blob payload", path);
  return values;
}

void write_attributions(const std::string& path, const std::vector<AttributionMap>& maps) {
  std::string out;
  out.append(kAttrMagic, 4);
  put_u32(out, kAttrVersion);
  put_u64(out, maps.size());
  for (const auto& map : maps) {
    put_u32(out, static_cast<uint32_t>(map.instance_id.size()));
    out.append(map.instance_id);
    put_u32(out, static_cast<uint32_t>(map.scores.size()));
    for (float s : map.scores) put_f32(out, s);
  }
  write_file(path, out);
}

std::vector<AttributionMap> read_attributions(const std::string& path) {
  Reader r(read_file(path), path);
  if (r.bytes(4) != std::string(kAttrMagic, 4)) {
    throw IoError("bad attribution file magic", path);
  }
  const uint32_t version = r.u32();
  if (version != kAttrVersion) {
    throw IoError("unsupported attribution file version " + std::to_string(version), path);
  }
  const uint64_t count = r.u64();
  std::vector<AttributionMap> maps;
  maps.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    AttributionMap map;
    map.instance_id = r.bytes(r.u32());
    const uint32_t d = r.u32();
    map.scores.reserve(d);
    for (uint32_t j = 0; j < d; ++j) map.scores.push_back(r.f32());
    maps.push_back(std::move(map));
  }
  if (!r.at_end()) throw IoError("trailing bytes after attribution payload", path);
  return maps;
}

namespace {

ordered_json region_to_json(const EffectiveRegion& region) {
  return ordered_json(region.indices());
}

EffectiveRegion region_from_json(const ordered_json& j) {
  return EffectiveRegion(j.get<std::vector<uint32_t>>());
}

}  // namespace

void write_manifest(const std::string& manifest_path, const Dataset& dataset,
                    const std::string& blob_subdir) {
  const fs::path dir = fs::path(manifest_path).parent_path();

  std::string out;
  ordered_json header;
  header["record"] = "header";
  header["version"] = 1;
  header["k"] = dataset.k;
  header["p_star"] = dataset.p_star;
  header["seed"] = dataset.seed;
  header["joint_er"] = region_to_json(dataset.joint_er);
  header["skipped"] = dataset.skipped;
  header["skip_reason"] = dataset.skip_reason;
  out += header.dump();
  out += '\n';

  for (const auto& inst : dataset.instances) {
    inst.validate(dataset.k);
    const std::string blob_rel = blob_subdir + "/" + inst.id + ".bin";
    write_blob((dir / blob_rel).string(), inst.features);

    ordered_json j;
    j["id"] = inst.id;
    j["shape"] = shape_to_json(inst.shape);
    j["y_orig"] = inst.y_orig;
    j["y_hat"] = inst.y_hat;
    j["manip_id"] = inst.manip_id;
    j["er"] = region_to_json(inst.er);
    if (!inst.corr.empty() || !inst.noncorr.empty()) {
      j["corr"] = region_to_json(inst.corr);
      j["noncorr"] = region_to_json(inst.noncorr);
    }
    if (!inst.split.empty()) j["split"] = inst.split;
    j["blob"] = blob_rel;
    out += j.dump();
    out += '\n';
  }
  write_file(manifest_path, out);
}

Dataset read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest", manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();

  Dataset dataset;
  std::string line;
  bool saw_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(line_no) +
                            ": invalid JSON: " + e.what());
    }
    if (!saw_header) {
      if (j.value("record", "") != "header") {
        throw ValidationError("manifest must start with a header record");
      }
      dataset.k = j.at("k").get<uint32_t>();
      dataset.p_star = j.at("p_star").get<double>();
      dataset.seed = j.at("seed").get<uint64_t>();
      dataset.joint_er = region_from_json(j.at("joint_er"));
      dataset.skipped = j.value("skipped", uint64_t{0});
      dataset.skip_reason = j.value("skip_reason", std::string());
      saw_header = true;
      continue;
    }
    Instance inst;
    inst.id = j.at("id").get<std::string>();
    inst.shape = shape_from_json(j.at("shape"));
    inst.y_orig = j.at("y_orig").get<int>();
    inst.y_hat = j.at("y_hat").get<int>();
    inst.manip_id = j.at("manip_id").get<std::string>();
    inst.er = region_from_json(j.at("er"));
    if (j.contains("corr")) inst.corr = region_from_json(j.at("corr"));
    if (j.contains("noncorr")) inst.noncorr = region_from_json(j.at("noncorr"));
    inst.split = j.value("split", std::string());
    const std::string blob_rel = j.at("blob").get<std::string>();
    inst.features = read_blob((dir / blob_rel).string());
    inst.validate(dataset.k);
    dataset.instances.push_back(std::move(inst));
  }
  if (!saw_header) throw ValidationError("manifest is empty: " + manifest_path);
  return dataset;
}

}  // namespace atgt::io
