#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saan/density.hpp"

namespace saan {

namespace fs = std::filesystem;

// Whole-file helpers. Throw ValidationError when the file cannot be opened.
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

// Binary PGM (P5), 8-bit. Pixels load as v/255 and save as round(255*v).
Image decode_pgm(std::string_view bytes);
std::string encode_pgm(const Image& image);
Image read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const Image& image);

// One "x,y" pair per line; LF line endings.
DotAnnotation parse_annotation(std::string_view text);
std::string format_annotation(const DotAnnotation& ann);
DotAnnotation read_annotation(const fs::path& path);
void write_annotation(const fs::path& path, const DotAnnotation& ann);

// "SAANDM1\n", u32 LE height, u32 LE width, height*width f32 LE row-major.
inline constexpr std::string_view kDensityMagic = "SAANDM1\n";
std::string encode_density(const DensityMap& map);
DensityMap decode_density(std::string_view bytes);
DensityMap read_density(const fs::path& path);
void write_density(const fs::path& path, const DensityMap& map);

struct ManifestItem {
  std::string image;
  std::string ann;
  std::string split;  // train | val | test
  bool operator==(const ManifestItem&) const = default;
};

// Paths inside the manifest are relative to the manifest's directory.
struct Manifest {
  std::vector<ManifestItem> items;
  std::optional<ScaleBins> bins;
  fs::path base_dir;

  fs::path resolve(const std::string& relative) const { return base_dir / relative; }
  std::vector<const ManifestItem*> split(std::string_view name) const;
};

// Ground-truth density maps live next to the annotation with a .dm extension.
fs::path density_path_for(const fs::path& ann_path);

Manifest parse_manifest(std::string_view json_text, const fs::path& base_dir);
std::string format_manifest(const Manifest& manifest);
// Parses and checks that every referenced image and annotation file exists.
Manifest load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const Manifest& manifest);
// Throws ValidationError listing every missing path.
void validate_manifest_files(const Manifest& manifest, bool require_density = false);

// Loads image, annotation, and prepared density map for every item of a split.
std::vector<Sample> load_samples(const Manifest& manifest, std::string_view split);

}  // namespace saan
