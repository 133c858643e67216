#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hovernet/error.hpp"

namespace hovernet {

using Label = std::uint32_t;
using ClassId = std::int32_t;

/// Dense row-major 2D grid. The tag parameter keeps grids with the same
/// element type but different meaning (labels vs. masks) from mixing.
template <class T, class Tag = void>
class Grid {
 public:
  using value_type = T;

  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {
    if (height == 0 || width == 0) {
      throw Error(ErrorKind::invalid_argument,
                  "grid dimensions must be at least 1x1, got " +
                      std::to_string(height) + "x" + std::to_string(width));
    }
  }

  Grid(std::size_t height, std::size_t width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) {
      throw Error(ErrorKind::invalid_argument,
                  "grid dimensions must be at least 1x1, got " +
                      std::to_string(height) + "x" + std::to_string(width));
    }
    if (data_.size() != height * width) {
      throw Error(ErrorKind::dimension_mismatch,
                  "grid data length " + std::to_string(data_.size()) +
                      " does not match " + std::to_string(height) + "x" +
                      std::to_string(width));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  template <class U, class OtherTag>
  bool same_shape(const Grid<U, OtherTag>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t height_;
  std::size_t width_;
  std::vector<T> data_;
};

struct InstanceTag;
struct MaskTag;
struct TypeTag;

using RealGrid = Grid<double>;
using InstanceMap = Grid<Label, InstanceTag>;
using BinaryMask = Grid<std::uint8_t, MaskTag>;
using TypeMap = Grid<ClassId, TypeTag>;

/// A channel stack (planar), e.g. per-class probabilities or an RGB tile.
using GridStack = std::vector<RealGrid>;

template <class A, class B>
void require_same_shape(const A& a, const B& b, std::string_view what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::dimension_mismatch,
                std::string(what) + ": " + std::to_string(a.height()) + "x" +
                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                    std::to_string(b.width()));
  }
}

/// Symmetric (edge-repeating) reflection of an index into [0, n): ...cba|abcd|dcb...
/// Valid for any offset and any n >= 1.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

template <class Out, class In>
Out grid_cast(const In& in) {
  Out out(in.height(), in.width());
  std::transform(in.begin(), in.end(), out.begin(),
                 [](auto v) { return static_cast<typename Out::value_type>(v); });
  return out;
}

}  // namespace hovernet
