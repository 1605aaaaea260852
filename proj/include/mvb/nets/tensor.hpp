#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvb::nets {

/// Heap buffer aligned for the widest SIMD packet. Eigen picks its vectorized
/// or scalar path per address, so fixed alignment keeps results reproducible.
template <typename T>
using AlignedBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense NHWC tensor.
template <typename T>
struct BasicTensor {
  int n = 0;
  int h = 0;
  int w = 0;
  int c = 0;
  AlignedBuffer<T> data;

  BasicTensor() = default;
  BasicTensor(int n_, int h_, int w_, int c_, T fill = T(0))
      : n(n_), h(h_), w(w_), c(c_),
        data(static_cast<std::size_t>(n_) * h_ * w_ * c_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(h) * w * c; }
  T* sample(int i) { return data.data() + i * sample_size(); }
  const T* sample(int i) const { return data.data() + i * sample_size(); }

  T& at(int i, int y, int x, int ch) {
    return data[((static_cast<std::size_t>(i) * h + y) * w + x) * c + ch];
  }
  T at(int i, int y, int x, int ch) const {
    return data[((static_cast<std::size_t>(i) * h + y) * w + x) * c + ch];
  }

  bool same_shape(const BasicTensor& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
  std::string shape_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }
  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mvb::nets
