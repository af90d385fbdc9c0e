#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saan/tensor.hpp"

namespace saan {

// Grayscale image with pixel values in [0, 1], row-major.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float at(std::size_t h, std::size_t w) const { return pixels[h * width + w]; }
  bool operator==(const Image&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Head positions in pixel coordinates, 0-indexed, 0 <= x < W and 0 <= y < H.
struct DotAnnotation {
  std::vector<Point> points;
  bool operator==(const DotAnnotation&) const = default;
};

// Non-negative people-per-pixel field; its sum is the crowd count.
struct DensityMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  float at(std::size_t h, std::size_t w) const { return values[h * width + w]; }
  double total() const;
  TensorD to_tensor() const;
  bool operator==(const DensityMap&) const = default;
};

// A count range split into three equal-width classes 1..3. The first two
// intervals are half-open, the last is closed; out-of-range counts clamp.
struct CountRange {
  double min = 0.0;
  double max = 0.0;

  int class_of(double count) const;
  bool operator==(const CountRange&) const = default;
};

struct ScaleBins {
  CountRange global;
  CountRange local;
  bool operator==(const ScaleBins&) const = default;
};

// Per-pixel classes in {1,2,3} on the (H/4) x (W/4) attention grid.
struct LocalScaleMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> classes;

  std::uint8_t at(std::size_t h, std::size_t w) const { return classes[h * width + w]; }
};

inline constexpr double kDefaultSigma = 4.0;
// Half-width of the 64x64 neighbourhood used for local counts.
inline constexpr std::size_t kLocalRadius = 32;

// Pixel a dot is stamped at: nearest pixel, clamped into the image.
std::size_t dot_pixel(double coord, std::size_t extent);

// Sum of unit-mass Gaussians (truncated at ceil(4 sigma), clipped at the
// borders, and renormalized per dot) centred on every dot.
DensityMap gaussian_density_map(const DotAnnotation& ann, std::size_t height, std::size_t width,
                                double sigma = kDefaultSigma);

// Per-pixel count over the [h-32,h+32) x [w-32,w+32) window.
TensorD local_counts(const DensityMap& map);

ScaleBins compute_bins(std::span<const DensityMap> train_maps);

int global_scale_label(const DensityMap& map, const ScaleBins& bins);

LocalScaleMap local_scale_map(const DensityMap& map, const ScaleBins& bins);

struct SynthParams {
  double radius_top = 4.0;     // blob radius at y = 0
  double radius_bottom = 1.5;  // blob radius at y = H - 1
  double blob_peak = 0.8;
  double background_mean = 0.2;
  double texture_amplitude = 0.12;
  std::size_t texture_cell = 8;
  double pixel_noise = 0.03;
};

struct Scene {
  Image image;
  DotAnnotation ann;
};

// Deterministic in (seed, arguments). Draws k ~ U{count_min..count_max} heads.
Scene synth_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                  std::size_t count_min, std::size_t count_max, const SynthParams& params = {});

struct Sample {
  std::string id;  // source image path, for reporting
  Image image;
  DotAnnotation ann;
  DensityMap density;
};

// Crops [y0, y0+crop) x [x0, x0+crop) and optionally mirrors horizontally.
// Dots whose stamped pixel falls outside the crop are dropped.
Sample crop_and_flip(const Sample& s, std::size_t x0, std::size_t y0, std::size_t crop, bool flip);

struct AugmentParams {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  bool flip = false;
};

// Random multiple-of-4 aligned crop origin and a fair coin for the flip.
AugmentParams draw_augment(std::uint64_t seed, std::size_t height, std::size_t width,
                           std::size_t crop);

Sample augment(const Sample& s, std::uint64_t seed, std::size_t crop);

}  // namespace saan
