#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "diffraster/errors.hpp"

namespace diffraster {

// Dense H x W x C buffer, row-major with interleaved channels.
template <typename T>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c, T fill = T(0))
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return data.empty(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }

  T& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

template <typename T>
void require_same_shape(const Image<T>& a, const Image<T>& b,
                        const std::string& what) {
  if (!a.same_shape(b))
    throw ShapeMismatch(what + ": shapes " + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + "x" +
                        std::to_string(a.channels) + " vs " +
                        std::to_string(b.height) + "x" +
                        std::to_string(b.width) + "x" +
                        std::to_string(b.channels));
}

template <typename T>
T max_abs_diff(const Image<T>& a, const Image<T>& b) {
  T m = T(0);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace diffraster
