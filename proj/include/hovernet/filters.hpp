#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "hovernet/grid.hpp"

namespace hovernet {

enum class Axis { horizontal, vertical };

namespace detail {

struct SobelKernel {
  std::array<double, 5> smooth{};
  std::array<double, 5> deriv{};
  int radius = 1;
};

inline SobelKernel sobel_kernel(int ksize) {
  if (ksize == 3) return {{1, 2, 1, 0, 0}, {-1, 0, 1, 0, 0}, 1};
  if (ksize == 5) return {{1, 4, 6, 4, 1}, {-1, -2, 0, 2, 1}, 2};
  throw Error(ErrorKind::invalid_argument,
              "sobel kernel size must be 3 or 5, got " + std::to_string(ksize));
}

}  // namespace detail

/// Signed Sobel derivative along one axis (positive where values increase
/// with the column / row index). Borders use symmetric reflection.
inline RealGrid sobel(const RealGrid& src, Axis axis, int ksize = 3) {
  const auto k = detail::sobel_kernel(ksize);
  const std::size_t h = src.height();
  const std::size_t w = src.width();
  RealGrid out(h, w, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int dr = -k.radius; dr <= k.radius; ++dr) {
        const std::size_t rr = reflect_index(static_cast<std::ptrdiff_t>(r) + dr, h);
        for (int dc = -k.radius; dc <= k.radius; ++dc) {
          const std::size_t cc = reflect_index(static_cast<std::ptrdiff_t>(c) + dc, w);
          const double weight =
              axis == Axis::horizontal
                  ? k.smooth[static_cast<std::size_t>(dr + k.radius)] *
                        k.deriv[static_cast<std::size_t>(dc + k.radius)]
                  : k.deriv[static_cast<std::size_t>(dr + k.radius)] *
                        k.smooth[static_cast<std::size_t>(dc + k.radius)];
          if (weight != 0.0) acc += weight * src(rr, cc);
        }
      }
      out(r, c) = acc;
    }
  }
  return out;
}

/// Rescales to [0,1] by (v - min) / (max - min); a constant grid maps to all zeros.
inline RealGrid minmax_normalize(const RealGrid& src) {
  const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  RealGrid out(src.height(), src.width(), 0.0);
  if (!(hi > lo)) return out;
  const double span = hi - lo;
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = (src[i] - lo) / span;
  return out;
}

}  // namespace hovernet
