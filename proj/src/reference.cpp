#include "saan/reference.hpp"

#include <cstddef>

namespace saan::reference {

using idx = std::ptrdiff_t;

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), k = w.dim(2);
  const idx p = static_cast<idx>((k - 1) / 2);
  BasicTensor<T> y({N, Cout, H, W});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t wx = 0; wx < W; ++wx) {
          T acc = b[co];
          for (std::size_t ci = 0; ci < Cin; ++ci)
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx) {
                const idx iy = static_cast<idx>(h + dy) - p;
                const idx ix = static_cast<idx>(wx + dx) - p;
                if (iy < 0 || ix < 0 || iy >= static_cast<idx>(H) || ix >= static_cast<idx>(W)) continue;
                acc += x.at(n, ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       w.at(co, ci, dy, dx);
              }
          y.at(n, co, h, wx) = acc;
        }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b) {
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(1);
  const std::size_t OH = 2 * H, OW = 2 * W;
  BasicTensor<T> y({N, Cout, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t co = 0; co < Cout; ++co)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) y.at(n, co, oy, ox) = b[co];
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t ci = 0; ci < Cin; ++ci)
      for (std::size_t iy = 0; iy < H; ++iy)
        for (std::size_t ix = 0; ix < W; ++ix)
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t ky = 0; ky < 4; ++ky)
              for (std::size_t kx = 0; kx < 4; ++kx) {
                const idx oy = static_cast<idx>(2 * iy + ky) - 1;
                const idx ox = static_cast<idx>(2 * ix + kx) - 1;
                if (oy < 0 || ox < 0 || oy >= static_cast<idx>(OH) || ox >= static_cast<idx>(OW)) continue;
                y.at(n, co, static_cast<std::size_t>(oy), static_cast<std::size_t>(ox)) +=
                    x.at(n, ci, iy, ix) * w.at(ci, co, ky, kx);
              }
  return y;
}

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& x) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  PoolResult<T> r{BasicTensor<T>({N, C, H / 2, W / 2}), {}};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oy = 0; oy < H / 2; ++oy)
        for (std::size_t ox = 0; ox < W / 2; ++ox) {
          std::size_t best_y = 2 * oy, best_x = 2 * ox;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              if (x.at(n, c, 2 * oy + dy, 2 * ox + dx) > x.at(n, c, best_y, best_x)) {
                best_y = 2 * oy + dy;
                best_x = 2 * ox + dx;
              }
          r.output.at(n, c, oy, ox) = x.at(n, c, best_y, best_x);
          r.argmax.push_back(((n * C + c) * H + best_y) * W + best_x);
        }
  return r;
}

template <typename T>
BasicTensor<T> box_sum(const BasicTensor<T>& map, std::size_t radius) {
  const idx H = static_cast<idx>(map.dim(0)), W = static_cast<idx>(map.dim(1));
  const idx r = static_cast<idx>(radius);
  BasicTensor<T> out(map.dims());
  for (idx h = 0; h < H; ++h)
    for (idx w = 0; w < W; ++w) {
      double acc = 0.0;
      for (idx y = h - r; y < h + r; ++y)
        for (idx x = w - r; x < w + r; ++x)
          if (y >= 0 && x >= 0 && y < H && x < W) acc += static_cast<double>(map.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
      out.at(static_cast<std::size_t>(h), static_cast<std::size_t>(w)) = static_cast<T>(acc);
    }
  return out;
}

template <typename T>
BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>& feature, const BasicTensor<T>& global,
                                   const BasicTensor<T>& local) {
  BasicTensor<T> y(feature.dims());
  for (std::size_t n = 0; n < feature.dim(0); ++n)
    for (std::size_t c = 0; c < feature.dim(1); ++c)
      for (std::size_t h = 0; h < feature.dim(2); ++h)
        for (std::size_t w = 0; w < feature.dim(3); ++w)
          y.at(n, c, h, w) = global[n] * local.at(n, 0, h, w) * feature.at(n, c, h, w);
  return y;
}

#define SAAN_INSTANTIATE_REFERENCE(T)                                                                 \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> conv2d_transpose(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                           const BasicTensor<T>&);                                    \
  template PoolResult<T> maxpool2(const BasicTensor<T>&);                                             \
  template BasicTensor<T> box_sum(const BasicTensor<T>&, std::size_t);                                \
  template BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                              const BasicTensor<T>&);

SAAN_INSTANTIATE_REFERENCE(float)
SAAN_INSTANTIATE_REFERENCE(double)

#undef SAAN_INSTANTIATE_REFERENCE

}  // namespace saan::reference
