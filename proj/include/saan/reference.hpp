#pragma once

// Serial brute-force versions of the parallel kernels. They follow the
// defining sums index by index, with no im2col, GEMM, or integral image, and
// exist for testing and benchmarking only.

#include <cstddef>

#include "saan/kernels.hpp"
#include "saan/tensor.hpp"

namespace saan::reference {

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

// Direct scatter: every (input, kernel tap) pair adds into the output position it hits.
template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b);

template <typename T>
PoolResult<T> maxpool2(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> box_sum(const BasicTensor<T>& map, std::size_t radius);

template <typename T>
BasicTensor<T> scale_broadcast_mul(const BasicTensor<T>& feature, const BasicTensor<T>& global,
                                   const BasicTensor<T>& local);

}  // namespace saan::reference
