#include "saan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>

namespace saan {

namespace {

using idx = std::ptrdiff_t;

// C[M,N] += op(A) * B with B [K,N] row-major and op(A)[i,k] = A[i*a_row + k*a_col].
// Rows are processed four at a time so each B row load feeds four accumulators.
// Every C element sums over k in ascending order.
template <typename T>
void gemm_rows(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t a_row,
               std::size_t a_col, const T* B, T* C) {
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 512;
  const idx row_blocks = static_cast<idx>((M + kRows - 1) / kRows);
#pragma omp parallel for schedule(static)
  for (idx rb = 0; rb < row_blocks; ++rb) {
    const std::size_t i0 = static_cast<std::size_t>(rb) * kRows;
    const std::size_t rows = std::min(kRows, M - i0);
    for (std::size_t j0 = 0; j0 < N; j0 += kCols) {
      const std::size_t cols = std::min(kCols, N - j0);
      if (rows == kRows) {
        T* c0 = C + (i0 + 0) * N + j0;
        T* c1 = C + (i0 + 1) * N + j0;
        T* c2 = C + (i0 + 2) * N + j0;
        T* c3 = C + (i0 + 3) * N + j0;
        for (std::size_t k = 0; k < K; ++k) {
          const T a0 = A[(i0 + 0) * a_row + k * a_col];
          const T a1 = A[(i0 + 1) * a_row + k * a_col];
          const T a2 = A[(i0 + 2) * a_row + k * a_col];
          const T a3 = A[(i0 + 3) * a_row + k * a_col];
          const T* b = B + k * N + j0;
#pragma omp simd
          for (std::size_t j = 0; j < cols; ++j) {
            c0[j] += a0 * b[j];
            c1[j] += a1 * b[j];
            c2[j] += a2 * b[j];
            c3[j] += a3 * b[j];
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          T* c = C + (i0 + r) * N + j0;
          for (std::size_t k = 0; k < K; ++k) {
            const T a = A[(i0 + r) * a_row + k * a_col];
            const T* b = B + k * N + j0;
#pragma omp simd
            for (std::size_t j = 0; j < cols; ++j) c[j] += a * b[j];
          }
        }
      }
    }
  }
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  gemm_rows(M, N, K, A, K, 1, B, C);
}

// C[M,N] += A^T * B with A stored [K,M]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  gemm_rows(M, N, K, A, 1, M, B, C);
}

// C[M,N] += A[M,K] * B^T with B stored [N,K]
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
  for (idx i = 0; i < static_cast<idx>(M); ++i) {
    const T* a = A + static_cast<std::size_t>(i) * K;
    for (std::size_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[static_cast<std::size_t>(i) * N + j] += acc;
    }
  }
}

struct Geometry {
  std::size_t channels, height, width;  // the padded-side tensor
  std::size_t kernel, stride;
  idx pad;
  std::size_t out_h, out_w;  // the sliding-window grid
};

// col[(c*k+ky)*k+kx][oy*out_w+ox] = in[c][oy*s-p+ky][ox*s-p+kx], zero outside.
template <typename T>
void im2col(const T* in, const Geometry& g, T* col) {
  const std::size_t grid = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (idx c = 0; c < static_cast<idx>(g.channels); ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx;
        T* dst = col + row * grid;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ky) - g.pad;
          T* d = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<idx>(g.height)) {
            std::fill(d, d + g.out_w, T{0});
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(c) * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kx) - g.pad;
            d[ox] = (ix >= 0 && ix < static_cast<idx>(g.width)) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back into `out` (accumulating).
template <typename T>
void col2im(const T* col, const Geometry& g, T* out) {
  const std::size_t grid = g.out_h * g.out_w;
#pragma omp parallel for schedule(static)
  for (idx c = 0; c < static_cast<idx>(g.channels); ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const std::size_t row = (static_cast<std::size_t>(c) * g.kernel + ky) * g.kernel + kx;
        const T* src = col + row * grid;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const idx iy = static_cast<idx>(oy * g.stride + ky) - g.pad;
          if (iy < 0 || iy >= static_cast<idx>(g.height)) continue;
          T* dst = out + (static_cast<std::size_t>(c) * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* s = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const idx ix = static_cast<idx>(ox * g.stride + kx) - g.pad;
            if (ix >= 0 && ix < static_cast<idx>(g.width)) dst[ix] += s[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void fill_bias(T* out, const T* bias, std::size_t channels, std::size_t plane) {
  for (std::size_t c = 0; c < channels; ++c) std::fill(out + c * plane, out + (c + 1) * plane, bias[c]);
}

template <typename T>
void add_bias_grad(const T* dy, std::size_t channels, std::size_t plane, T* db) {
  for (std::size_t c = 0; c < channels; ++c) {
    T acc = 0;
    const T* p = dy + c * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    db[c] += acc;
  }
}

void expect(bool ok, const char* op, const std::string& axis, const std::string& detail) {
  if (!ok) throw DimensionError(op, axis, detail);
}

std::string pair(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

template <typename T>
void check_conv(const BasicTensor<T>& x, const BasicTensor<T>& w, const char* op) {
  require_rank(x, 4, op);
  require_rank(w, 4, op);
  expect(w.dim(2) == w.dim(3), op, "kernel", "kernel must be square, got " + shape_string(w.dims()));
  expect(w.dim(2) % 2 == 1, op, "kernel", "kernel size must be odd, got " + std::to_string(w.dim(2)));
  expect(w.dim(1) == x.dim(1), op, "input channels", pair(x.dim(1), w.dim(1)));
}

template <typename T>
void check_deconv(const BasicTensor<T>& x, const BasicTensor<T>& w, const char* op) {
  require_rank(x, 4, op);
  require_rank(w, 4, op);
  expect(w.dim(2) == 4 && w.dim(3) == 4, op, "kernel", "transposed conv kernel must be 4x4, got " + shape_string(w.dims()));
  expect(w.dim(0) == x.dim(1), op, "input channels", pair(x.dim(1), w.dim(0)));
}

}  // namespace

// ----------------------------------------------------------------- conv2d

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  check_conv(x, w, "conv2d");
  require_rank(b, 1, "conv2d");
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), k = w.dim(2);
  expect(b.dim(0) == Cout, "conv2d", "bias", pair(b.dim(0), Cout));

  const std::size_t plane = H * W, K = Cin * k * k;
  const Geometry g{Cin, H, W, k, 1, static_cast<idx>((k - 1) / 2), H, W};
  BasicTensor<T> y({N, Cout, H, W});
  std::vector<T> col(K * plane);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.ptr() + n * Cin * plane;
    T* yn = y.ptr() + n * Cout * plane;
    const T* src = xn;
    if (k != 1) {
      im2col(xn, g, col.data());
      src = col.data();
    }
    fill_bias(yn, b.ptr(), Cout, plane);
    gemm_nn(Cout, plane, K, w.ptr(), src, yn);
  }
  return y;
}

template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& dy, bool need_input_grad) {
  check_conv(x, w, "conv2d_backward");
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), k = w.dim(2);
  expect(dy.dims() == Shape{N, Cout, H, W}, "conv2d_backward", "upstream gradient",
         shape_string(dy.dims()));

  const std::size_t plane = H * W, K = Cin * k * k;
  const Geometry g{Cin, H, W, k, 1, static_cast<idx>((k - 1) / 2), H, W};
  LayerGrad<T> grad;
  grad.weight = BasicTensor<T>(w.dims());
  grad.bias = BasicTensor<T>({Cout});
  if (need_input_grad) grad.input = BasicTensor<T>(x.dims());

  std::vector<T> col(K * plane);
  std::vector<T> dcol(need_input_grad ? K * plane : 0);
  for (std::size_t n = 0; n < N; ++n) {
    const T* xn = x.ptr() + n * Cin * plane;
    const T* dyn = dy.ptr() + n * Cout * plane;
    const T* src = xn;
    if (k != 1) {
      im2col(xn, g, col.data());
      src = col.data();
    }
    gemm_nt(Cout, K, plane, dyn, src, grad.weight.ptr());
    add_bias_grad(dyn, Cout, plane, grad.bias.ptr());
    if (need_input_grad) {
      T* dxn = grad.input.ptr() + n * Cin * plane;
      if (k == 1) {
        gemm_tn(K, plane, Cout, w.ptr(), dyn, dxn);
      } else {
        std::fill(dcol.begin(), dcol.end(), T{0});
        gemm_tn(K, plane, Cout, w.ptr(), dyn, dcol.data());
        col2im(dcol.data(), g, dxn);
      }
    }
  }
  return grad;
}

// ------------------------------------------------------ conv2d_transpose

template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b) {
  check_deconv(x, w, "conv2d_transpose");
  require_rank(b, 1, "conv2d_transpose");
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(1);
  expect(b.dim(0) == Cout, "conv2d_transpose", "bias", pair(b.dim(0), Cout));

  const std::size_t plane = H * W, out_plane = 4 * plane, M = Cout * 16;
  const Geometry g{Cout, 2 * H, 2 * W, 4, 2, 1, H, W};
  BasicTensor<T> y({N, Cout, 2 * H, 2 * W});
  std::vector<T> col(M * plane);
  for (std::size_t n = 0; n < N; ++n) {
    std::fill(col.begin(), col.end(), T{0});
    gemm_tn(M, plane, Cin, w.ptr(), x.ptr() + n * Cin * plane, col.data());
    T* yn = y.ptr() + n * Cout * out_plane;
    fill_bias(yn, b.ptr(), Cout, out_plane);
    col2im(col.data(), g, yn);
  }
  return y;
}

template <typename T>
LayerGrad<T> conv2d_transpose_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                       const BasicTensor<T>& dy, bool need_input_grad) {
  check_deconv(x, w, "conv2d_transpose_backward");
  const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(1);
  expect(dy.dims() == Shape{N, Cout, 2 * H, 2 * W}, "conv2d_transpose_backward",
         "upstream gradient", shape_string(dy.dims()));

  const std::size_t plane = H * W, out_plane = 4 * plane, M = Cout * 16;
  const Geometry g{Cout, 2 * H, 2 * W, 4, 2, 1, H, W};
  LayerGrad<T> grad;
  grad.weight = BasicTensor<T>(w.dims());
  grad.bias = BasicTensor<T>({Cout});
  if (need_input_grad) grad.input = BasicTensor<T>(x.dims());

  std::vector<T> dcol(M * plane);
  for (std::size_t n = 0; n < N; ++n) {
    const T* dyn = dy.ptr() + n * Cout * out_plane;
    im2col(dyn, g, dcol.data());
    gemm_nt(Cin, M, plane, x.ptr() + n * Cin * plane, dcol.data(), grad.weight.ptr());
    add_bias_grad(dyn, Cout, out_plane, grad.bias.ptr());
    if (need_input_grad) {
      gemm_nn(Cin, plane, M, w.ptr(), dcol.data(), grad.input.ptr() + n * Cin * plane);
    }
  }
  return grad;
}

// ---------------------------------------------------------------- maxpool

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& x) {
  require_rank(x, 4, "maxpool2");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw DimensionError("maxpool2", H % 2 ? "height" : "width",
                         "odd extent in " + shape_string(x.dims()) + "; pad the input to even size first");
  }
  const std::size_t OH = H / 2, OW = W / 2;
  PoolResult<T> r{BasicTensor<T>({N, C, OH, OW}), std::vector<std::size_t>(N * C * OH * OW)};
#pragma omp parallel for schedule(static)
  for (idx nc = 0; nc < static_cast<idx>(N * C); ++nc) {
    const std::size_t in_base = static_cast<std::size_t>(nc) * H * W;
    const std::size_t out_base = static_cast<std::size_t>(nc) * OH * OW;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = in_base + (2 * oy) * W + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
        for (std::size_t c : cand) {
          if (x[c] > x[best]) best = c;
        }
        r.output[out_base + oy * OW + ox] = x[best];
        r.argmax[out_base + oy * OW + ox] = best;
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& dy, std::span<const std::size_t> argmax,
                                 const Shape& input_dims) {
  expect(dy.size() == argmax.size(), "maxpool2_backward", "upstream gradient",
         pair(dy.size(), argmax.size()));
  BasicTensor<T> dx(input_dims);
  // Windows do not overlap, so each input element receives at most one write.
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// --------------------------------------------------------- fully connected

template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& w,
                               const BasicTensor<T>& b) {
  require_rank(x, 2, "fully_connected");
  require_rank(w, 2, "fully_connected");
  require_rank(b, 1, "fully_connected");
  const std::size_t N = x.dim(0), D = x.dim(1), M = w.dim(1);
  expect(w.dim(0) == D, "fully_connected", "inner dimension", pair(D, w.dim(0)));
  expect(b.dim(0) == M, "fully_connected", "bias", pair(b.dim(0), M));
  BasicTensor<T> y({N, M});
  for (std::size_t n = 0; n < N; ++n) std::copy(b.ptr(), b.ptr() + M, y.ptr() + n * M);
  gemm_nn(N, M, D, x.ptr(), w.ptr(), y.ptr());
  return y;
}

template <typename T>
LayerGrad<T> fully_connected_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                      const BasicTensor<T>& dy) {
  require_rank(x, 2, "fully_connected_backward");
  const std::size_t N = x.dim(0), D = x.dim(1), M = w.dim(1);
  expect(dy.dims() == Shape{N, M}, "fully_connected_backward", "upstream gradient",
         shape_string(dy.dims()));
  LayerGrad<T> g{BasicTensor<T>({N, D}), BasicTensor<T>({D, M}), BasicTensor<T>({M})};
  gemm_nt(N, D, M, dy.ptr(), w.ptr(), g.input.ptr());
  gemm_tn(D, M, N, x.ptr(), dy.ptr(), g.weight.ptr());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m) g.bias[m] += dy[n * M + m];
  return g;
}

// ------------------------------------------------------------ activations

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x_or_y, const BasicTensor<T>& dy) {
  expect(x_or_y.dims() == dy.dims(), "relu_backward", "upstream gradient",
         shape_string(x_or_y.dims()) + " vs " + shape_string(dy.dims()));
  BasicTensor<T> dx(dy.dims());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x_or_y[i] > T{0} ? dy[i] : T{0};
  return dx;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
  BasicTensor<T> y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    T s;
    if (v >= T{0}) {
      s = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      s = e / (T{1} + e);
    }
    y[i] = std::clamp(s, lo, hi);
  }
  return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  expect(y.dims() == dy.dims(), "sigmoid_backward", "upstream gradient",
         shape_string(y.dims()) + " vs " + shape_string(dy.dims()));
  BasicTensor<T> dx(dy.dims());
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
  return dx;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  require_rank(x, 2, "softmax");
  const std::size_t N = x.dim(0), K = x.dim(1);
  BasicTensor<T> y(x.dims());
  for (std::size_t n = 0; n < N; ++n) {
    const T* in = x.ptr() + n * K;
    T* out = y.ptr() + n * K;
    const T mx = *std::max_element(in, in + K);
    T total = 0;
    for (std::size_t k = 0; k < K; ++k) {
      out[k] = std::exp(in[k] - mx);
      total += out[k];
    }
    for (std::size_t k = 0; k < K; ++k) out[k] /= total;
  }
  return y;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy) {
  require_rank(y, 2, "softmax_backward");
  expect(y.dims() == dy.dims(), "softmax_backward", "upstream gradient",
         shape_string(y.dims()) + " vs " + shape_string(dy.dims()));
  const std::size_t N = y.dim(0), K = y.dim(1);
  BasicTensor<T> dx(y.dims());
  for (std::size_t n = 0; n < N; ++n) {
    T dot = 0;
    for (std::size_t k = 0; k < K; ++k) dot += y[n * K + k] * dy[n * K + k];
    for (std::size_t k = 0; k < K; ++k) dx[n * K + k] = y[n * K + k] * (dy[n * K + k] - dot);
  }
  return dx;
}

// ------------------------------------------------------------ concat/split

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels", "inputs", "no tensors given");
  const BasicTensor<T>& first = *inputs[0];
  require_rank(first, 4, "concat_channels");
  const std::size_t N = first.dim(0), H = first.dim(2), W = first.dim(3);
  std::size_t C = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& t = *inputs[i];
    require_rank(t, 4, "concat_channels");
    expect(t.dim(0) == N, "concat_channels", "batch", "input " + std::to_string(i) + ": " + pair(t.dim(0), N));
    expect(t.dim(2) == H, "concat_channels", "height", "input " + std::to_string(i) + ": " + pair(t.dim(2), H));
    expect(t.dim(3) == W, "concat_channels", "width", "input " + std::to_string(i) + ": " + pair(t.dim(3), W));
    C += t.dim(1);
  }
  const std::size_t plane = H * W;
  BasicTensor<T> y({N, C, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    T* dst = y.ptr() + n * C * plane;
    for (const auto* t : inputs) {
      const std::size_t len = t->dim(1) * plane;
      const T* src = t->ptr() + n * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return y;
}

template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& x,
                                           std::span<const std::size_t> channels) {
  require_rank(x, 4, "split_channels");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::size_t total = 0;
  for (auto c : channels) total += c;
  expect(total == C, "split_channels", "channels", pair(total, C));
  const std::size_t plane = H * W;
  std::vector<BasicTensor<T>> out;
  out.reserve(channels.size());
  for (auto c : channels) out.emplace_back(Shape{N, c, H, W});
  for (std::size_t n = 0; n < N; ++n) {
    const T* src = x.ptr() + n * C * plane;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t len = channels[i] * plane;
      std::copy(src, src + len, out[i].ptr() + n * len);
      src += len;
    }
  }
  return out;
}

// ----------------------------------------------------- attention weighting

namespace {

template <typename T>
void check_scale_mul(const BasicTensor<T>& f, const BasicTensor<T>& g, const BasicTensor<T>& l,
                     const char* op) {
  require_rank(f, 4, op);
  require_rank(g, 1, op);
  require_rank(l, 4, op);
  expect(g.dim(0) == f.dim(0), op, "global batch", pair(g.dim(0), f.dim(0)));
  expect(l.dim(0) == f.dim(0), op, "local batch", pair(l.dim(0), f.dim(0)));
  expect(l.dim(1) == 1, op, "local channels", "expected 1, got " + std::to_string(l.dim(1)));
  expect(l.dim(2) == f.dim(2), op, "height", pair(l.dim(2), f.dim(2)));
  expect(l.dim(3) == f.dim(3), op, "width", pair(l.dim(3), f.dim(3)));
}

}  // namespace

template <typename T>
BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>& feature, const BasicTensor<T>& global,
                                   const BasicTensor<T>& local) {
  check_scale_mul(feature, global, local, "scale_broadcast_mul");
  const std::size_t N = feature.dim(0), C = feature.dim(1), plane = feature.dim(2) * feature.dim(3);
  BasicTensor<T> y(feature.dims());
  for (std::size_t n = 0; n < N; ++n) {
    const T g = global[n];
    const T* l = local.ptr() + n * plane;
    for (std::size_t c = 0; c < C; ++c) {
      const T* f = feature.ptr() + (n * C + c) * plane;
      T* out = y.ptr() + (n * C + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[p] = g * l[p] * f[p];
    }
  }
  return y;
}

template <typename T>
ScaleMulGrad<T> scale_broadcast_mul_backward(const BasicTensor<T>& feature,
                                             const BasicTensor<T>& global,
                                             const BasicTensor<T>& local,
                                             const BasicTensor<T>& dy) {
  check_scale_mul(feature, global, local, "scale_broadcast_mul_backward");
  expect(dy.dims() == feature.dims(), "scale_broadcast_mul_backward", "upstream gradient",
         shape_string(dy.dims()));
  const std::size_t N = feature.dim(0), C = feature.dim(1), plane = feature.dim(2) * feature.dim(3);
  ScaleMulGrad<T> g{BasicTensor<T>(feature.dims()), BasicTensor<T>(global.dims()),
                    BasicTensor<T>(local.dims())};
  for (std::size_t n = 0; n < N; ++n) {
    const T gn = global[n];
    const T* l = local.ptr() + n * plane;
    T* dl = g.local.ptr() + n * plane;
    T dg = 0;
    for (std::size_t c = 0; c < C; ++c) {
      const T* f = feature.ptr() + (n * C + c) * plane;
      const T* d = dy.ptr() + (n * C + c) * plane;
      T* df = g.feature.ptr() + (n * C + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        df[p] = gn * l[p] * d[p];
        dl[p] += gn * f[p] * d[p];
        dg += l[p] * f[p] * d[p];
      }
    }
    g.global[n] = dg;
  }
  return g;
}

// --------------------------------------------------------- shape plumbing

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  BasicTensor<T> y({N, C});
  for (std::size_t i = 0; i < N * C; ++i) {
    T acc = 0;
    const T* p = x.ptr() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    y[i] = acc / static_cast<T>(plane);
  }
  return y;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& dy, const Shape& input_dims) {
  const std::size_t plane = input_dims.at(2) * input_dims.at(3);
  expect(dy.dims() == Shape{input_dims[0], input_dims[1]}, "global_avg_pool_backward",
         "upstream gradient", shape_string(dy.dims()));
  BasicTensor<T> dx(input_dims);
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T v = dy[i] / static_cast<T>(plane);
    std::fill(dx.ptr() + i * plane, dx.ptr() + (i + 1) * plane, v);
  }
  return dx;
}

template <typename T>
BasicTensor<T> pad_to_even(const BasicTensor<T>& x) {
  require_rank(x, 4, "pad_to_even");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t PH = H + (H % 2), PW = W + (W % 2);
  if (PH == H && PW == W) return x;
  BasicTensor<T> y({N, C, PH, PW});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t h = 0; h < PH; ++h) {
      const std::size_t sh = std::min(h, H - 1);
      for (std::size_t w = 0; w < PW; ++w) {
        y[(nc * PH + h) * PW + w] = x[(nc * H + sh) * W + std::min(w, W - 1)];
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> pad_to_even_backward(const BasicTensor<T>& dy, const Shape& input_dims) {
  const std::size_t H = input_dims.at(2), W = input_dims.at(3);
  const std::size_t PH = dy.dim(2), PW = dy.dim(3);
  if (PH == H && PW == W) return dy;
  BasicTensor<T> dx(input_dims);
  const std::size_t NC = input_dims[0] * input_dims[1];
  for (std::size_t nc = 0; nc < NC; ++nc) {
    for (std::size_t h = 0; h < PH; ++h) {
      const std::size_t sh = std::min(h, H - 1);
      for (std::size_t w = 0; w < PW; ++w) {
        dx[(nc * H + sh) * W + std::min(w, W - 1)] += dy[(nc * PH + h) * PW + w];
      }
    }
  }
  return dx;
}

namespace {

std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (i < n) return i;
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  std::size_t m = i % period;
  return m < n ? m : period - m;
}

}  // namespace

template <typename T>
BasicTensor<T> reflect_pad(const BasicTensor<T>& x, std::size_t pad_h, std::size_t pad_w) {
  require_rank(x, 4, "reflect_pad");
  if (pad_h == 0 && pad_w == 0) return x;
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t PH = H + pad_h, PW = W + pad_w;
  BasicTensor<T> y({N, C, PH, PW});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t h = 0; h < PH; ++h) {
      const std::size_t sh = reflect_index(h, H);
      for (std::size_t w = 0; w < PW; ++w) {
        y[(nc * PH + h) * PW + w] = x[(nc * H + sh) * W + reflect_index(w, W)];
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> crop_top_left(const BasicTensor<T>& x, std::size_t h, std::size_t w) {
  require_rank(x, 4, "crop_top_left");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  expect(h <= H && w <= W, "crop_top_left", "extent",
         "crop " + pair(h, w) + " exceeds " + shape_string(x.dims()));
  if (h == H && w == W) return x;
  BasicTensor<T> y({N, C, h, w});
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(x.ptr() + (nc * H + r) * W, w, y.ptr() + (nc * h + r) * w);
  return y;
}

template <typename T>
BasicTensor<T> crop_top_left_backward(const BasicTensor<T>& dy, const Shape& input_dims) {
  const std::size_t H = input_dims.at(2), W = input_dims.at(3);
  const std::size_t h = dy.dim(2), w = dy.dim(3);
  if (h == H && w == W) return dy;
  BasicTensor<T> dx(input_dims);
  const std::size_t NC = input_dims[0] * input_dims[1];
  for (std::size_t nc = 0; nc < NC; ++nc)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(dy.ptr() + (nc * h + r) * w, w, dx.ptr() + (nc * H + r) * W);
  return dx;
}

// ----------------------------------------------------------------- box_sum

template <typename T>
BasicTensor<T> box_sum(const BasicTensor<T>& map, std::size_t radius) {
  require_rank(map, 2, "box_sum");
  const std::size_t H = map.dim(0), W = map.dim(1);
  // Integral image in double with a zero guard row/column.
  std::vector<double> integral((H + 1) * (W + 1), 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    double row = 0.0;
    for (std::size_t w = 0; w < W; ++w) {
      row += static_cast<double>(map[h * W + w]);
      integral[(h + 1) * (W + 1) + w + 1] = integral[h * (W + 1) + w + 1] + row;
    }
  }
  BasicTensor<T> out(map.dims());
  const auto r = static_cast<idx>(radius);
#pragma omp parallel for schedule(static)
  for (idx h = 0; h < static_cast<idx>(H); ++h) {
    const std::size_t y0 = static_cast<std::size_t>(std::max<idx>(0, h - r));
    const std::size_t y1 = static_cast<std::size_t>(std::min<idx>(static_cast<idx>(H), h + r));
    for (idx w = 0; w < static_cast<idx>(W); ++w) {
      const std::size_t x0 = static_cast<std::size_t>(std::max<idx>(0, w - r));
      const std::size_t x1 = static_cast<std::size_t>(std::min<idx>(static_cast<idx>(W), w + r));
      double s = 0.0;
      if (y1 > y0 && x1 > x0) {
        s = integral[y1 * (W + 1) + x1] - integral[y0 * (W + 1) + x1] -
            integral[y1 * (W + 1) + x0] + integral[y0 * (W + 1) + x0];
      }
      out[static_cast<std::size_t>(h) * W + static_cast<std::size_t>(w)] = static_cast<T>(s);
    }
  }
  return out;
}

// ---------------------------------------------------------- instantiation

#define SAAN_INSTANTIATE_KERNELS(T)                                                                \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                 const BasicTensor<T>&);                                           \
  template LayerGrad<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                        const BasicTensor<T>&, bool);                              \
  template BasicTensor<T> conv2d_transpose(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                           const BasicTensor<T>&);                                 \
  template LayerGrad<T> conv2d_transpose_backward(const BasicTensor<T>&, const BasicTensor<T>&,    \
                                                  const BasicTensor<T>&, bool);                    \
  template PoolResult<T> maxpool2(const BasicTensor<T>&);                                          \
  template BasicTensor<T> maxpool2_backward(const BasicTensor<T>&, std::span<const std::size_t>,   \
                                            const Shape&);                                         \
  template BasicTensor<T> fully_connected(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                          const BasicTensor<T>&);                                  \
  template LayerGrad<T> fully_connected_backward(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                                 const BasicTensor<T>&);                           \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                             \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                          \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                          \
  template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);                 \
  template std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>&,                       \
                                                      std::span<const std::size_t>);               \
  template BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                              const BasicTensor<T>&);                              \
  template ScaleMulGrad<T> scale_broadcast_mul_backward(                                           \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                  \
  template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);           \
  template BasicTensor<T> pad_to_even(const BasicTensor<T>&);                                      \
  template BasicTensor<T> pad_to_even_backward(const BasicTensor<T>&, const Shape&);               \
  template BasicTensor<T> reflect_pad(const BasicTensor<T>&, std::size_t, std::size_t);            \
  template BasicTensor<T> crop_top_left(const BasicTensor<T>&, std::size_t, std::size_t);          \
  template BasicTensor<T> crop_top_left_backward(const BasicTensor<T>&, const Shape&);             \
  template BasicTensor<T> box_sum(const BasicTensor<T>&, std::size_t);

SAAN_INSTANTIATE_KERNELS(float)
SAAN_INSTANTIATE_KERNELS(double)

#undef SAAN_INSTANTIATE_KERNELS

}  // namespace saan
