#include "saan/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "saan/error.hpp"
#include "saan/kernels.hpp"
#include "saan/rng.hpp"

namespace saan {

double DensityMap::total() const {
  double s = 0.0;
  for (float v : values) s += v;
  return s;
}

TensorD DensityMap::to_tensor() const {
  return TensorD({height, width}, std::vector<double>(values.begin(), values.end()));
}

int CountRange::class_of(double count) const {
  const double width = (max - min) / 3.0;
  if (count < min + width) return 1;
  if (count < min + 2.0 * width) return 2;
  return 3;
}

std::size_t dot_pixel(double coord, std::size_t extent) {
  const double r = std::round(coord);
  if (r <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(r), extent - 1);
}

DensityMap gaussian_density_map(const DotAnnotation& ann, std::size_t height, std::size_t width,
                                double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian_density_map: sigma must be > 0");
  if (height == 0 || width == 0) throw ValidationError("gaussian_density_map: empty image");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);

  std::vector<double> acc(height * width, 0.0);
  std::vector<double> stamp;
  for (std::size_t i = 0; i < ann.points.size(); ++i) {
    const Point& p = ann.points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height))) {
      throw ValidationError("gaussian_density_map: dot " + std::to_string(i) + " at (" +
                            std::to_string(p.x) + ", " + std::to_string(p.y) +
                            ") lies outside the " + std::to_string(width) + "x" +
                            std::to_string(height) + " image");
    }
    const auto cx = static_cast<std::ptrdiff_t>(dot_pixel(p.x, width));
    const auto cy = static_cast<std::ptrdiff_t>(dot_pixel(p.y, height));
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, cy - radius);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(H - 1, cy + radius);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, cx - radius);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W - 1, cx + radius);

    stamp.assign(static_cast<std::size_t>((y1 - y0 + 1) * (x1 - x0 + 1)), 0.0);
    double mass = 0.0;
    std::size_t k = 0;
    for (std::ptrdiff_t y = y0; y <= y1; ++y)
      for (std::ptrdiff_t x = x0; x <= x1; ++x) {
        const double d2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        stamp[k] = std::exp(-d2 * inv2s2);
        mass += stamp[k++];
      }
    k = 0;
    for (std::ptrdiff_t y = y0; y <= y1; ++y)
      for (std::ptrdiff_t x = x0; x <= x1; ++x)
        acc[static_cast<std::size_t>(y * W + x)] += stamp[k++] / mass;
  }
  DensityMap map{height, width, std::vector<float>(acc.begin(), acc.end())};
  return map;
}

TensorD local_counts(const DensityMap& map) { return box_sum(map.to_tensor(), kLocalRadius); }

ScaleBins compute_bins(std::span<const DensityMap> train_maps) {
  if (train_maps.empty()) throw ValidationError("compute_bins: training set is empty");
  ScaleBins bins;
  bins.global = {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  bins.local = bins.global;
  for (const auto& m : train_maps) {
    const double c = m.total();
    bins.global.min = std::min(bins.global.min, c);
    bins.global.max = std::max(bins.global.max, c);
    const TensorD local = local_counts(m);
    for (double v : local.data()) {
      bins.local.min = std::min(bins.local.min, v);
      bins.local.max = std::max(bins.local.max, v);
    }
  }
  if (!(bins.global.min < bins.global.max)) {
    throw ValidationError("compute_bins: degenerate training set, every image has count " +
                          std::to_string(bins.global.min) + " (count range [" +
                          std::to_string(bins.global.min) + ", " + std::to_string(bins.global.max) + "])");
  }
  return bins;
}

int global_scale_label(const DensityMap& map, const ScaleBins& bins) {
  return bins.global.class_of(map.total());
}

LocalScaleMap local_scale_map(const DensityMap& map, const ScaleBins& bins) {
  if (map.height % 4 != 0 || map.width % 4 != 0) {
    throw DimensionError("local_scale_map", map.height % 4 ? "height" : "width",
                         std::to_string(map.height) + "x" + std::to_string(map.width) +
                             " is not divisible by 4");
  }
  const TensorD counts = local_counts(map);
  LocalScaleMap out{map.height / 4, map.width / 4, {}};
  out.classes.resize(out.height * out.width);
  for (std::size_t h = 0; h < out.height; ++h)
    for (std::size_t w = 0; w < out.width; ++w)
      out.classes[h * out.width + w] =
          static_cast<std::uint8_t>(bins.local.class_of(counts.at(4 * h, 4 * w)));
  return out;
}

// ------------------------------------------------------------------ synth

Scene synth_scene(std::uint64_t seed, std::size_t height, std::size_t width,
                  std::size_t count_min, std::size_t count_max, const SynthParams& params) {
  if (height == 0 || width == 0) throw ValidationError("synth_scene: empty canvas");
  if (count_min > count_max) throw ValidationError("synth_scene: count_min > count_max");
  Rng rng(seed);

  // Value-noise texture: random lattice, bilinear interpolation.
  const std::size_t cell = std::max<std::size_t>(1, params.texture_cell);
  const std::size_t gh = height / cell + 2, gw = width / cell + 2;
  std::vector<double> lattice(gh * gw);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);

  Scene scene;
  scene.image = {height, width, std::vector<float>(height * width)};
  std::vector<double> canvas(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(cell);
    const auto iy = static_cast<std::size_t>(fy);
    const double ty = fy - static_cast<double>(iy);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(cell);
      const auto ix = static_cast<std::size_t>(fx);
      const double tx = fx - static_cast<double>(ix);
      const double a = lattice[iy * gw + ix], b = lattice[iy * gw + ix + 1];
      const double c = lattice[(iy + 1) * gw + ix], d = lattice[(iy + 1) * gw + ix + 1];
      const double tex = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
      canvas[y * width + x] =
          params.background_mean + params.texture_amplitude * tex + params.pixel_noise * rng.normal();
    }
  }

  const auto k = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(count_min), static_cast<std::int64_t>(count_max)));
  scene.ann.points.reserve(k);
  const double span_y = height > 1 ? static_cast<double>(height - 1) : 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double px = rng.uniform(0.0, static_cast<double>(width));
    const double py = rng.uniform(0.0, static_cast<double>(height));
    scene.ann.points.push_back({px, py});

    // Perspective proxy: heads shrink linearly towards the bottom of the frame.
    const double t = std::min(py / span_y, 1.0);
    const double radius = params.radius_top + (params.radius_bottom - params.radius_top) * t;
    const double s = 0.6 * radius;
    const double inv2s2 = 1.0 / (2.0 * s * s);
    const double reach = 2.0 * radius;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(py - reach));
    const auto y1 = static_cast<std::ptrdiff_t>(std::ceil(py + reach));
    const auto x0 = static_cast<std::ptrdiff_t>(std::floor(px - reach));
    const auto x1 = static_cast<std::ptrdiff_t>(std::ceil(px + reach));
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y0);
         y <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(height) - 1, y1); ++y) {
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x0);
           x <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width) - 1, x1); ++x) {
        const double dx = static_cast<double>(x) - px, dy = static_cast<double>(y) - py;
        canvas[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] +=
            params.blob_peak * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  for (std::size_t i = 0; i < canvas.size(); ++i)
    scene.image.pixels[i] = static_cast<float>(std::clamp(canvas[i], 0.0, 1.0));
  return scene;
}

// ---------------------------------------------------------------- augment

Sample crop_and_flip(const Sample& s, std::size_t x0, std::size_t y0, std::size_t crop, bool flip) {
  const std::size_t H = s.image.height, W = s.image.width;
  if (crop == 0 || x0 + crop > W || y0 + crop > H) {
    throw ValidationError("crop_and_flip: crop of " + std::to_string(crop) + " at (" +
                          std::to_string(x0) + ", " + std::to_string(y0) + ") exceeds " +
                          std::to_string(W) + "x" + std::to_string(H));
  }
  if (s.density.height != H || s.density.width != W) {
    throw DimensionError("crop_and_flip", "density", "density map size differs from image size");
  }
  auto src_col = [&](std::size_t x) { return x0 + (flip ? crop - 1 - x : x); };

  Sample out;
  out.id = s.id;
  out.image = {crop, crop, std::vector<float>(crop * crop)};
  out.density = {crop, crop, std::vector<float>(crop * crop)};
  for (std::size_t y = 0; y < crop; ++y)
    for (std::size_t x = 0; x < crop; ++x) {
      out.image.pixels[y * crop + x] = s.image.at(y0 + y, src_col(x));
      out.density.values[y * crop + x] = s.density.at(y0 + y, src_col(x));
    }

  const double upper = std::nextafter(static_cast<double>(crop), 0.0);
  for (const Point& p : s.ann.points) {
    const std::size_t px = dot_pixel(p.x, W), py = dot_pixel(p.y, H);
    if (px < x0 || px >= x0 + crop || py < y0 || py >= y0 + crop) continue;
    double nx = std::clamp(p.x - static_cast<double>(x0), 0.0, upper);
    const double ny = std::clamp(p.y - static_cast<double>(y0), 0.0, upper);
    if (flip) nx = std::clamp(static_cast<double>(crop - 1) - nx, 0.0, upper);
    out.ann.points.push_back({nx, ny});
  }
  return out;
}

AugmentParams draw_augment(std::uint64_t seed, std::size_t height, std::size_t width,
                           std::size_t crop) {
  if (crop == 0 || crop % 4 != 0) {
    throw ValidationError("augment: crop size " + std::to_string(crop) + " must be a positive multiple of 4");
  }
  if (crop > std::min(height, width)) {
    throw ValidationError("augment: crop size " + std::to_string(crop) + " exceeds image " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  Rng rng(seed);
  AugmentParams p;
  p.x0 = 4 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>((width - crop) / 4)));
  p.y0 = 4 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>((height - crop) / 4)));
  p.flip = rng.uniform() < 0.5;
  return p;
}

Sample augment(const Sample& s, std::uint64_t seed, std::size_t crop) {
  const AugmentParams p = draw_augment(seed, s.image.height, s.image.width, crop);
  return crop_and_flip(s, p.x0, p.y0, crop, p.flip);
}

}  // namespace saan
