#include "saan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace saan {

std::string shape_string(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_volume(const Shape& dims) {
  std::size_t v = 1;
  for (auto d : dims) v *= d;
  return v;
}

namespace {

void validate_shape(const Shape& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw DimensionError("tensor", "rank", "rank must be 1..4, got " + std::to_string(dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) {
      throw DimensionError("tensor", "axis " + std::to_string(i), "extent must be >= 1");
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, T fill) : dims_(std::move(dims)) {
  validate_shape(dims_);
  data_.assign(shape_volume(dims_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  validate_shape(dims_);
  if (data_.size() != shape_volume(dims_)) {
    throw DimensionError("tensor", "data", "buffer length " + std::to_string(data_.size()) +
                                               " != volume of " + shape_string(dims_));
  }
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape dims) const {
  if (shape_volume(dims) != data_.size()) {
    throw DimensionError("reshape", "volume", shape_string(dims_) + " -> " + shape_string(dims));
  }
  return BasicTensor<T>(std::move(dims), data_);
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const std::string& op) {
  if (t.rank() != rank) {
    throw DimensionError(op, "rank", "expected rank " + std::to_string(rank) + ", got " +
                                         shape_string(t.dims()));
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void require_rank(const BasicTensor<float>&, std::size_t, const std::string&);
template void require_rank(const BasicTensor<double>&, std::size_t, const std::string&);

}  // namespace saan
