#pragma once

// Forward and analytic backward kernels for every layer type in the network.
//
// All kernels are pure functions of their arguments. Element-level work is
// split across OpenMP threads by output slice (channel or row), so every
// output element is accumulated by exactly one thread in a fixed order and
// results do not depend on the thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "saan/tensor.hpp"

namespace saan {

// Gradient carrier for a parameterized op. Param grads are empty when the op has none.
template <typename T>
struct LayerGrad {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

// Odd-kernel, stride-1, "same" zero-padded convolution.
struct ConvSpec {
  std::size_t filter_size = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  std::size_t padding() const noexcept { return (filter_size - 1) / 2; }
};

// x: [N,Cin,H,W], w: [Cout,Cin,k,k], b: [Cout] -> [N,Cout,H,W]
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

// Gradients of a scalar loss given dy = dL/d(conv2d(x, w, b)).
// Input gradient is skipped (left empty) when need_input_grad is false.
template <typename T>
LayerGrad<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& dy, bool need_input_grad = true);

// Kernel 4, stride 2, padding 1 transposed convolution.
// x: [N,Cin,H,W], w: [Cin,Cout,4,4], b: [Cout] -> [N,Cout,2H,2W]
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b);

template <typename T>
LayerGrad<T> conv2d_transpose_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                       const BasicTensor<T>& dy, bool need_input_grad = true);

// 2x2 stride-2 max pooling. argmax holds the flat input index chosen for each
// output element; ties resolve to the first position in row-major order.
template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> maxpool2_backward(const BasicTensor<T>& dy, std::span<const std::size_t> argmax,
                                 const Shape& input_dims);

// x: [N,D], w: [D,M], b: [M] -> [N,M]
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicTensor<T>& w,
                               const BasicTensor<T>& b);

template <typename T>
LayerGrad<T> fully_connected_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                      const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

// Works with either the op input or its output: the mask is value > 0 in both.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x_or_y, const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

// y is the sigmoid output.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

// Row-wise softmax over [N,K].
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x);

// y is the softmax output.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& y, const BasicTensor<T>& dy);

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> inputs);

// Inverse of concat_channels: splits [N,sum(C),H,W] into pieces with the given channel counts.
template <typename T>
std::vector<BasicTensor<T>> split_channels(const BasicTensor<T>& x,
                                           std::span<const std::size_t> channels);

// out[n,c,h,w] = global[n] * local[n,0,h,w] * feature[n,c,h,w]
// feature: [N,C,H,W], global: [N], local: [N,1,H,W]
template <typename T>
BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>& feature, const BasicTensor<T>& global,
                                   const BasicTensor<T>& local);

template <typename T>
struct ScaleMulGrad {
  BasicTensor<T> feature;
  BasicTensor<T> global;
  BasicTensor<T> local;
};

template <typename T>
ScaleMulGrad<T> scale_broadcast_mul_backward(const BasicTensor<T>& feature,
                                             const BasicTensor<T>& global,
                                             const BasicTensor<T>& local,
                                             const BasicTensor<T>& dy);

// [N,C,H,W] -> [N,C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& dy, const Shape& input_dims);

// Replicates the last row/column so H and W become even. No-op on even dims.
template <typename T>
BasicTensor<T> pad_to_even(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> pad_to_even_backward(const BasicTensor<T>& dy, const Shape& input_dims);

// Reflect-pads bottom/right of [N,C,H,W] to [N,C,H+pad_h,W+pad_w].
template <typename T>
BasicTensor<T> reflect_pad(const BasicTensor<T>& x, std::size_t pad_h, std::size_t pad_w);

// Top-left crop of [N,C,H,W] to [N,C,h,w]; the backward is zero-padding.
template <typename T>
BasicTensor<T> crop_top_left(const BasicTensor<T>& x, std::size_t h, std::size_t w);

template <typename T>
BasicTensor<T> crop_top_left_backward(const BasicTensor<T>& dy, const Shape& input_dims);

// Sum over the window [h-r, h+r) x [w-r, w+r) of a [H,W] map, zero outside
// the map. Integral image, O(HW).
template <typename T>
BasicTensor<T> box_sum(const BasicTensor<T>& map, std::size_t radius);

}  // namespace saan
