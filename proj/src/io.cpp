#include "saan/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bytes.hpp"
#include "saan/error.hpp"

namespace saan {

using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

// -------------------------------------------------------------------- PGM

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::size_t pgm_header_int(std::string_view b, std::size_t& pos, const char* field) {
  for (;;) {
    while (pos < b.size() && is_space(b[pos])) ++pos;
    if (pos < b.size() && b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(b.data() + pos, b.data() + b.size(), v);
  if (ec != std::errc{}) throw ParseError(std::string("pgm: expected ") + field, pos);
  pos = static_cast<std::size_t>(ptr - b.data());
  return v;
}

}  // namespace

Image decode_pgm(std::string_view b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw ParseError("pgm: missing P5 magic", 0);
  std::size_t pos = 2;
  const std::size_t width = pgm_header_int(b, pos, "width");
  const std::size_t height = pgm_header_int(b, pos, "height");
  const std::size_t maxval = pgm_header_int(b, pos, "maxval");
  if (width == 0 || height == 0) throw ParseError("pgm: zero image extent", pos);
  if (maxval == 0 || maxval > 255) throw ParseError("pgm: only 8-bit maxval (1..255) is supported", pos);
  if (pos >= b.size() || !is_space(b[pos])) throw ParseError("pgm: expected whitespace after maxval", pos);
  ++pos;
  if (b.size() - pos < width * height) {
    throw ParseError("pgm: truncated pixel data (need " + std::to_string(width * height) + " bytes)", b.size());
  }
  Image img{height, width, std::vector<float>(width * height)};
  for (std::size_t i = 0; i < width * height; ++i) {
    const auto v = static_cast<unsigned char>(b[pos + i]);
    img.pixels[i] = static_cast<float>(std::min<std::size_t>(v, maxval)) / static_cast<float>(maxval);
  }
  return img;
}

std::string encode_pgm(const Image& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

Image read_pgm(const fs::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_pgm(const fs::path& path, const Image& image) { write_file(path, encode_pgm(image)); }

// ------------------------------------------------------------- annotations

DotAnnotation parse_annotation(std::string_view text) {
  DotAnnotation ann;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      const std::size_t comma = line.find(',');
      if (comma == std::string_view::npos) throw ParseError("annotation: expected 'x,y'", pos);
      Point p;
      auto parse = [&](std::string_view s, double& out, std::size_t at) {
        while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
        while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(out)) {
          throw ParseError("annotation: bad number '" + std::string(s) + "'", at);
        }
      };
      parse(line.substr(0, comma), p.x, pos);
      parse(line.substr(comma + 1), p.y, pos + comma + 1);
      ann.points.push_back(p);
    }
    pos = end + 1;
  }
  return ann;
}

std::string format_annotation(const DotAnnotation& ann) {
  std::string out;
  char buf[64];
  for (const Point& p : ann.points) {
    auto r = std::to_chars(buf, buf + sizeof buf, p.x);
    out.append(buf, r.ptr);
    out.push_back(',');
    r = std::to_chars(buf, buf + sizeof buf, p.y);
    out.append(buf, r.ptr);
    out.push_back('\n');
  }
  return out;
}

DotAnnotation read_annotation(const fs::path& path) {
  try {
    return parse_annotation(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_annotation(const fs::path& path, const DotAnnotation& ann) {
  write_file(path, format_annotation(ann));
}

// ------------------------------------------------------------ density codec

std::string encode_density(const DensityMap& map) {
  detail::ByteWriter w;
  w.bytes(kDensityMagic);
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  for (float v : map.values) w.f32(v);
  return w.take();
}

DensityMap decode_density(std::string_view bytes) {
  detail::ByteReader r(bytes, "density map");
  if (r.bytes(kDensityMagic.size(), "magic") != kDensityMagic) {
    throw ParseError("density map: bad magic (expected SAANDM1)", 0);
  }
  DensityMap map;
  map.height = r.u32("height");
  map.width = r.u32("width");
  if (map.height == 0 || map.width == 0) r.fail("zero extent");
  const std::size_t n = map.height * map.width;
  if ((bytes.size() - r.offset()) / 4 < n) {
    throw ParseError("density map: truncated data (need " + std::to_string(n) + " floats)",
                     r.offset() + ((bytes.size() - r.offset()) / 4) * 4);
  }
  map.values.resize(n);
  for (auto& v : map.values) v = r.f32("value");
  if (!r.at_end()) r.fail("trailing bytes after data");
  return map;
}

DensityMap read_density(const fs::path& path) {
  try {
    return decode_density(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_density(const fs::path& path, const DensityMap& map) { write_file(path, encode_density(map)); }

// --------------------------------------------------------------- manifest

std::vector<const ManifestItem*> Manifest::split(std::string_view name) const {
  std::vector<const ManifestItem*> out;
  for (const auto& it : items)
    if (it.split == name) out.push_back(&it);
  return out;
}

fs::path density_path_for(const fs::path& ann_path) {
  fs::path p = ann_path;
  p.replace_extension(".dm");
  return p;
}

namespace {

CountRange parse_range(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number() ||
      !j[key][1].is_number()) {
    throw ValidationError(std::string("manifest: bins.") + key + " must be [min, max]");
  }
  CountRange r{j[key][0].get<double>(), j[key][1].get<double>()};
  if (r.min > r.max) throw ValidationError(std::string("manifest: bins.") + key + " has min > max");
  return r;
}

}  // namespace

Manifest parse_manifest(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("manifest: ") + e.what(), e.byte);
  }
  if (!j.is_object() || !j.contains("items") || !j["items"].is_array()) {
    throw ValidationError("manifest: expected an object with an 'items' array");
  }
  Manifest m;
  m.base_dir = base_dir;
  std::size_t i = 0;
  for (const auto& item : j["items"]) {
    for (const char* key : {"image", "ann", "split"}) {
      if (!item.contains(key) || !item[key].is_string()) {
        throw ValidationError("manifest: items[" + std::to_string(i) + "] needs string '" + key + "'");
      }
    }
    ManifestItem it{item["image"], item["ann"], item["split"]};
    if (it.split != "train" && it.split != "val" && it.split != "test") {
      throw ValidationError("manifest: items[" + std::to_string(i) + "] has unknown split '" + it.split + "'");
    }
    m.items.push_back(std::move(it));
    ++i;
  }
  if (j.contains("bins") && !j["bins"].is_null()) {
    m.bins = ScaleBins{parse_range(j["bins"], "global"), parse_range(j["bins"], "local")};
  }
  return m;
}

std::string format_manifest(const Manifest& manifest) {
  json j;
  j["items"] = json::array();
  for (const auto& it : manifest.items) {
    j["items"].push_back({{"image", it.image}, {"ann", it.ann}, {"split", it.split}});
  }
  if (manifest.bins) {
    j["bins"] = {{"global", {manifest.bins->global.min, manifest.bins->global.max}},
                 {"local", {manifest.bins->local.min, manifest.bins->local.max}}};
  }
  return j.dump(2) + "\n";
}

void validate_manifest_files(const Manifest& manifest, bool require_density) {
  std::vector<std::string> missing;
  for (const auto& it : manifest.items) {
    const fs::path img = manifest.resolve(it.image), ann = manifest.resolve(it.ann);
    if (!fs::exists(img)) missing.push_back(img.string());
    if (!fs::exists(ann)) missing.push_back(ann.string());
    if (require_density && !fs::exists(density_path_for(ann))) missing.push_back(density_path_for(ann).string());
  }
  if (!missing.empty()) {
    std::string msg = "manifest references missing files:";
    for (const auto& p : missing) msg += "\n  " + p;
    throw ValidationError(msg);
  }
}

Manifest load_manifest(const fs::path& path) {
  Manifest m = parse_manifest(read_file(path), path.parent_path());
  validate_manifest_files(m);
  return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  write_file(path, format_manifest(manifest));
}

std::vector<Sample> load_samples(const Manifest& manifest, std::string_view split) {
  std::vector<Sample> out;
  for (const ManifestItem* it : manifest.split(split)) {
    Sample s;
    s.id = it->image;
    s.image = read_pgm(manifest.resolve(it->image));
    s.ann = read_annotation(manifest.resolve(it->ann));
    const fs::path dm = density_path_for(manifest.resolve(it->ann));
    if (!fs::exists(dm)) {
      throw ValidationError("missing density map '" + dm.string() + "'; run the prepare command first");
    }
    s.density = read_density(dm);
    if (s.density.height != s.image.height || s.density.width != s.image.width) {
      throw ValidationError("density map '" + dm.string() + "' does not match its image size");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace saan
